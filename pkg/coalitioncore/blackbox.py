"""
Turns an arbitrary allocation into a fully stable solution whose total
payment equals the configuration LP optimum, while keeping at least half
of the input welfare.

The construction runs in two phases: the greedy matching is applied to
the input allocation with payments derived from the LP dual, projects
are classified by how much of their value survives the matching, and
the resulting state is repaired (phase one) and matched once more
(phase two).
"""

from dataclasses import dataclass, field
import logging

import numpy as np

from coalitioncore import agent_sets
from coalitioncore.agent_sets import AgentSet
from coalitioncore.verify import certify
from coalitioncore.config import config
from coalitioncore.matching import MatchingResult, greedy_matching
from coalitioncore.model import (
    Allocation,
    Instance,
    Solution,
    basic_metrics,
    social_welfare,
)
from coalitioncore.utils import (
    InstanceValidationError,
    InternalInvariantError,
    safe_ratio,
    timing,
)
from coalitioncore.welfare_opt import DualSolution, solve_config_lp


@dataclass
class ProjectClass:
    """
    Fate of the agents of a nonempty input project after the matching
    """

    project: int
    stayers: AgentSet
    leavers: AgentSet
    #: projects the leavers ended up on, in the order of the leavers' indices
    filled: list[int]
    good: bool


@dataclass
class ProjectClassification:
    projects: dict[int, ProjectClass] = field(default_factory=dict)

    def bad_projects(self) -> list[int]:
        return [k for k, c in self.projects.items() if not c.good]


@dataclass
class PhaseOneState:
    allocation: Allocation
    payments: np.ndarray
    #: dummy agents per bad project
    dummies: dict[int, AgentSet] = field(default_factory=dict)
    #: leftover slack per bad project
    leftover_slack: dict[int, float] = field(default_factory=dict)

    def all_dummies(self) -> AgentSet:
        union = 0
        for d in self.dummies.values():
            union |= d
        return union


def make_initial_payments(alloc: Allocation, dual: DualSolution) -> np.ndarray:
    """
    Pays every agent its dual price plus an equal share of the slack of
    its project: p_i = p*_i + z*_k / |A_k|.

    :param alloc: a full allocation
    :param dual: the configuration LP dual
    :raises InstanceValidationError: if an agent is unassigned
    :return: the initial payments
    """
    if not alloc.is_full():
        missing = agent_sets.members(agent_sets.full_mask(alloc.num_agents) & ~alloc.assigned())
        raise InstanceValidationError(f"Agents {missing} are not assigned to any project")
    payments = dual.p_star
    for k, s in enumerate(alloc.sets):
        if s:
            payments[agent_sets.members(s)] += dual.slacks[k] / agent_sets.size(s)
    return payments


def classify_projects(
    inst: Instance, alloc: Allocation, match: MatchingResult, tol: float | None = None
) -> ProjectClassification:
    """
    Classifies each nonempty input project k. Agents that are still on k
    after the matching are stayers, the others are leavers. The project is
    good if the stayers' value for k plus the values of the projects the
    leavers filled is at least half of v_k(A_k). Bad projects must have
    more stayers than leavers.

    :param inst: the instance
    :param alloc: the input allocation A
    :param match: the result of the greedy matching started from A
    :param tol: comparison tolerance, defaults to the configured one
    :raises InternalInvariantError: if a bad project has too few stayers
    :return: the classification of all nonempty input projects
    """
    tol = config.tolerance if tol is None else tol
    after = match.allocation
    result = ProjectClassification()
    for k, members in enumerate(alloc.sets):
        if not members:
            continue
        stayers = members & after.sets[k]
        leavers = members & ~after.sets[k]
        filled = [after.project_of(i) for i in agent_sets.members(leavers)]
        assert all(l is not None for l in filled), "Matching never unassigns agents"
        kept = inst.projects[k].value(stayers) + sum(
            inst.projects[l].value(after.sets[l]) for l in filled  # type: ignore[index]
        )
        good = kept >= inst.projects[k].value(members) / 2 - tol
        if not good and agent_sets.size(stayers) <= agent_sets.size(leavers):
            raise InternalInvariantError(
                f"Bad project {k} has {agent_sets.size(stayers)} stayers but "
                f"{agent_sets.size(leavers)} leavers"
            )
        result.projects[k] = ProjectClass(k, stayers, leavers, filled, good)  # type: ignore[arg-type]
    logging.debug(f"Bad projects after the matching: {result.bad_projects()}")
    return result


def phase_one(
    inst: Instance,
    alloc: Allocation,
    dual: DualSolution,
    match: MatchingResult,
    classes: ProjectClassification,
    tol: float | None = None,
) -> PhaseOneState:
    """
    Rebuilds allocation and payments project by project.

    Good projects keep the layout of the matching: stayers share the slack
    of their project, p' = p* + z*_k/|stayers|, and each leaver is paid
    p* + z*_l of the project l it filled.

    Bad projects get their leavers back, paid p^B + z'_k/|leavers| with
    the leftover slack z'_k = z*_k - Σ_leavers (p^B - p*). The lowest
    indexed |stayers| - |leavers| stayers remain as dummies at p*, the
    remaining stayers take over the projects the leavers filled, in index
    order, and are paid p* + z*_l.

    :param inst: the instance
    :param alloc: the input allocation A
    :param dual: the configuration LP dual
    :param match: the matching result for A
    :param classes: the project classification
    :param tol: comparison tolerance, defaults to the configured one
    :raises InternalInvariantError: if a leftover slack is negative
    :return: the phase one allocation and payments
    """
    tol = config.tolerance if tol is None else tol
    p_star, z_star = dual.p_star, dual.z_star
    sets = [0] * inst.num_projects
    payments = p_star.copy()
    state_dummies: dict[int, AgentSet] = {}
    leftover: dict[int, float] = {}
    for k, c in classes.projects.items():
        leavers = agent_sets.members(c.leavers)
        if c.good:
            sets[k] |= c.stayers
            if c.stayers:
                stayers = agent_sets.members(c.stayers)
                payments[stayers] = p_star[stayers] + z_star[k] / len(stayers)
            for i, l in zip(leavers, c.filled):
                sets[l] |= 1 << i
                payments[i] = p_star[i] + z_star[l]
            continue

        num_dummies = agent_sets.size(c.stayers) - len(leavers)
        dummies = agent_sets.lowest_members(c.stayers, num_dummies)
        dummy_mask = agent_sets.mask_of(dummies)
        raised = match.payments[leavers] - p_star[leavers]
        slack = float(z_star[k] - raised.sum())
        if slack < 0:
            if slack < -config.slack_clamp:
                raise InternalInvariantError(
                    f"Leftover slack of bad project {k} is negative: {slack}"
                )
            slack = 0.0
        sets[k] |= c.leavers | dummy_mask
        payments[leavers] = match.payments[leavers] + slack / len(leavers)
        payments[dummies] = p_star[dummies]
        movers = agent_sets.members(c.stayers & ~dummy_mask)
        for i, l in zip(movers, c.filled):
            sets[l] |= 1 << i
            payments[i] = p_star[i] + z_star[l]
        state_dummies[k] = dummy_mask
        leftover[k] = slack
    state = PhaseOneState(
        Allocation(tuple(sets), inst.num_agents), payments, state_dummies, leftover
    )
    logging.debug(f"Phase one allocation: {state.allocation.describe()}")
    return state


def phase_two(
    inst: Instance,
    state: PhaseOneState,
    dual: DualSolution,
    tol: float | None = None,
) -> tuple[Solution, MatchingResult]:
    """
    Runs the greedy matching on the phase one state. Only dummies may move;
    every mover is finally paid p*_i + z*_l of its new project l.

    :param inst: the instance
    :param state: the phase one state
    :param dual: the configuration LP dual
    :param tol: comparison tolerance, defaults to the configured one
    :raises InternalInvariantError: if an agent that is not a dummy moves
    :return: the final solution and the phase two matching result
    """
    match = greedy_matching(inst, state.allocation, state.payments, tol)
    dummies = state.all_dummies()
    payments = match.payments.copy()
    for i in sorted(match.movers()):
        if not agent_sets.contains(dummies, i):
            raise InternalInvariantError(f"Agent {i} moved in phase two but is not a dummy")
        target = match.allocation.project_of(i)
        assert target is not None
        payments[i] = dual.p_star[i] + dual.slacks[target]
    alloc = match.allocation
    sol = Solution(alloc, payments, basic_metrics(inst, alloc, payments), "blackbox", dual)
    return sol, match


@timing
def stabilize(
    inst: Instance,
    alloc: Allocation,
    tol: float | None = None,
    with_trace: bool = False,
) -> Solution:
    """
    Computes a fully stable solution from an input allocation A. The
    total payment is the configuration LP optimum, so the budget factor
    is at most 2α with α = LP optimum / SW(A), and the output keeps at
    least half of the welfare of A.

    :param inst: the instance
    :param alloc: the full input allocation A
    :param tol: comparison tolerance, defaults to the configured one
    :param with_trace: whether to attach the move logs of both matchings
    :raises InternalInvariantError: if a proven bound fails or the result
                                    fails its stability certificate
    :return: the certified stable solution
    """
    tol = config.tolerance if tol is None else tol
    objective, dual = solve_config_lp(inst)
    initial = make_initial_payments(alloc, dual)
    first_match = greedy_matching(inst, alloc, initial, tol)
    classes = classify_projects(inst, alloc, first_match, tol)
    state = phase_one(inst, alloc, dual, first_match, classes, tol)
    sol, second_match = phase_two(inst, state, dual, tol)

    input_welfare = social_welfare(inst, alloc)
    assert sol.metrics is not None
    if sol.metrics.welfare < input_welfare / 2 - tol:
        raise InternalInvariantError(
            f"Stabilized welfare {sol.metrics.welfare} is below half of the input "
            f"welfare {input_welfare}"
        )
    if sol.metrics.total_payment > objective + config.lp_tolerance:
        raise InternalInvariantError(
            f"Total payment {sol.metrics.total_payment} exceeds the LP optimum {objective}"
        )
    sol.metrics.dual_objective = objective
    sol.metrics.extra.update(
        {
            "alpha": safe_ratio(objective, input_welfare, tol),
            "input_welfare": input_welfare,
            "bad_projects": len(classes.bad_projects()),
            "first_matching_moves": len(first_match.moves),
            "second_matching_moves": len(second_match.moves),
        }
    )
    report = certify(inst, sol)
    if not report.passed:
        raise InternalInvariantError(
            f"Stabilized solution of {inst} is not stable: {report.summary()}"
        )
    if with_trace:
        sol.trace = [{"phase": 1, **m} for m in first_match.move_log()] + [
            {"phase": 2, **m} for m in second_match.move_log()
        ]
    logging.info(
        f"Stabilized {inst}: welfare {input_welfare:.4f} -> {sol.metrics.welfare:.4f}, "
        f"total payment {sol.metrics.total_payment:.4f}"
    )
    return sol
