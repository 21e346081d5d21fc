"""
Welfare maximization: exact brute force over all assignments, the dual of
the configuration LP, and the greedy algorithms for submodular and
anonymous projects.
"""

from dataclasses import dataclass, field
import logging
from typing import Any

from dataclasses_json import dataclass_json
import numpy as np
from scipy.optimize import linprog  # type: ignore

from coalitioncore import agent_sets
from coalitioncore.agent_sets import AgentSet
from coalitioncore.config import config
from coalitioncore.model import Allocation, Instance, social_welfare
from coalitioncore.utils import (
    InternalInvariantError,
    ScaleGuardError,
    ValuationClassError,
    timing,
)
from coalitioncore.valuations import AnonymousValuation, ValuationClass, check_class

#: number of assignments evaluated per vectorized brute force step
CHUNK_SIZE = 1 << 18

#: feasibility tolerances passed to the HiGHS solver
HIGHS_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


@dataclass_json
@dataclass
class DualSolution:
    """
    Optimal solution of the configuration LP dual: one price per agent
    and one slack per project.
    """

    prices: list[float]
    slacks: list[float]
    objective: float
    #: fractional primal solution as (project, agent set, weight) entries
    primal_support: list[tuple[int, int, float]] = field(default_factory=list)
    #: largest complementary slackness residual of the primal support
    slackness_residual: float = 0.0

    @property
    def p_star(self) -> np.ndarray:
        return np.array(self.prices)

    @property
    def z_star(self) -> np.ndarray:
        return np.array(self.slacks)

    def max_violation(self, inst: Instance) -> float:
        """
        Scans all m·2^N dual constraints and returns the largest violation
        v_k(S) - p*(S) - z*_k (negative if all constraints hold strictly).

        :param inst: the instance the dual belongs to
        :return: the largest constraint violation
        """
        agent_sets.require_exhaustive(inst.num_agents, "dual feasibility check")
        set_prices = agent_sets.set_payments(self.p_star)
        return max(
            float(np.max(v.table - set_prices - z))
            for v, z in zip(inst.projects, self.slacks)
        )


@dataclass_json
@dataclass
class GreedyStep:
    """A single iteration of a greedy algorithm"""

    agents: list[int]
    project: int
    #: marginal contribution per assigned agent
    marginal: float
    #: the project's agent set before the step
    before: AgentSet


@dataclass
class GreedyTrace:
    steps: list[GreedyStep] = field(default_factory=list)

    def marginals(self) -> list[float]:
        return [s.marginal for s in self.steps]

    def is_non_increasing(self, tol: float | None = None) -> bool:
        tol = config.tolerance if tol is None else tol
        values = self.marginals()
        return all(a >= b - tol for a, b in zip(values, values[1:]))

    def to_list(self) -> list[dict[str, Any]]:
        return [s.to_dict() for s in self.steps]  # type: ignore[attr-defined]


@dataclass
class GreedyResult:
    """Allocation and marginal payments determined by a greedy algorithm"""

    allocation: Allocation
    payments: np.ndarray
    trace: GreedyTrace


@timing
def brute_force_opt(inst: Instance, tol: float | None = None) -> tuple[Allocation, float]:
    """
    Finds a welfare maximizing allocation by enumerating all m^N full
    assignments. Among optimal assignments, the lexicographically smallest
    one (agent 0 first) is returned.

    :param inst: the instance
    :param tol: comparison tolerance, defaults to the configured one
    :raises ScaleGuardError: if m^N exceeds the configured limit
    :return: the optimal allocation and its welfare
    """
    tol = config.tolerance if tol is None else tol
    n, m = inst.num_agents, inst.num_projects
    if m == 1:
        alloc = Allocation.all_on(0, n, 1)
        return alloc, social_welfare(inst, alloc)
    total = m**n
    if total > config.brute_force_limit:
        raise ScaleGuardError(
            f"Brute force would enumerate {m}^{n} = {total} assignments "
            f"(limit {config.brute_force_limit})"
        )
    agent_sets.require_exhaustive(n, "brute force optimization")
    tables = [v.table for v in inst.projects]
    # agent 0 is the most significant digit, so numeric order is lexicographic order
    powers = m ** np.arange(n - 1, -1, -1, dtype=np.int64)
    bits = np.int64(1) << np.arange(n, dtype=np.int64)
    best_value = -np.inf
    best_code = 0
    for start in range(0, total, CHUNK_SIZE):
        codes = np.arange(start, min(start + CHUNK_SIZE, total), dtype=np.int64)
        digits = (codes[:, None] // powers) % m
        welfare = np.zeros(len(codes))
        for k, table in enumerate(tables):
            welfare += table[((digits == k) * bits).sum(axis=1)]
        chunk_best = welfare.max()
        if chunk_best > best_value + tol:
            best_code = int(codes[np.flatnonzero(welfare >= chunk_best - tol)[0]])
            best_value = chunk_best
        elif chunk_best > best_value:
            best_value = chunk_best
    assignment = [int(d) for d in (best_code // powers) % m]
    alloc = Allocation.from_assignment(assignment, m)
    welfare_opt = social_welfare(inst, alloc)
    logging.debug(f"Brute force optimum of {inst}: {welfare_opt} ({alloc.describe()})")
    return alloc, welfare_opt


@timing
def solve_config_lp(inst: Instance) -> tuple[float, DualSolution]:
    """
    Solves the dual of the configuration LP directly:

        min Σ p_i + Σ z_k  s.t.  Σ_{i∈S} p_i + z_k >= v_k(S)  for all k, S
                                 p, z >= 0

    The returned dual is re-verified against all constraints. The
    fractional primal support is recovered from the constraint marginals.

    :param inst: the instance
    :raises ScaleGuardError: if N exceeds the exhaustive limit
    :raises InternalInvariantError: if the LP solver fails or returns an
                                    infeasible dual
    :return: the LP optimum and the dual solution
    """
    n, m = inst.num_agents, inst.num_projects
    agent_sets.require_exhaustive(n, "configuration LP")
    bits = agent_sets.membership_matrix(n)
    num_sets = 1 << n
    blocks = []
    for k in range(m):
        slack_columns = np.zeros((num_sets, m))
        slack_columns[:, k] = 1.0
        blocks.append(np.hstack([bits, slack_columns]))
    a_ub = -np.vstack(blocks)
    b_ub = -np.concatenate([v.table for v in inst.projects])
    result = linprog(
        c=np.ones(n + m),
        A_ub=a_ub,
        b_ub=b_ub,
        bounds=[(0, None)] * (n + m),
        method="highs",
        options=HIGHS_OPTIONS,
    )
    if result.status != 0:
        raise InternalInvariantError(f"Configuration LP could not be solved: {result.message}")
    x = np.maximum(result.x, 0.0)
    prices, slacks = x[:n], x[n:]

    # primal weights are the negated marginals of the <= constraints
    weights = -np.asarray(result.ineqlin.marginals)
    support = [
        (int(row // num_sets), int(row % num_sets), float(weights[row]))
        for row in np.flatnonzero(weights > config.lp_tolerance)
    ]
    constraint_slack = b_ub - a_ub @ x
    residual = float(np.max(np.abs(weights * constraint_slack), initial=0.0))

    dual = DualSolution(
        prices=[float(p) for p in prices],
        slacks=[float(z) for z in slacks],
        objective=float(x.sum()),
        primal_support=support,
        slackness_residual=residual,
    )
    check_dual(inst, dual)
    logging.debug(f"Configuration LP of {inst}: objective {dual.objective}")
    return dual.objective, dual


def check_dual(inst: Instance, dual: DualSolution, tol: float | None = None) -> None:
    """
    Checks that a configuration LP dual is feasible and that complementary
    slackness with its primal support holds.

    :param inst: the instance
    :param dual: the dual solution
    :param tol: LP tolerance, defaults to the configured one
    :raises InternalInvariantError: if either check fails
    """
    tol = config.lp_tolerance if tol is None else tol
    violation = dual.max_violation(inst)
    if violation > tol:
        raise InternalInvariantError(
            f"Configuration LP dual violates a constraint by {violation}"
        )
    if dual.slackness_residual > tol:
        raise InternalInvariantError(
            f"Complementary slackness of the configuration LP is off by "
            f"{dual.slackness_residual}"
        )


def _require_submodular(inst: Instance, tol: float) -> None:
    for k, v in enumerate(inst.projects):
        if v.submodular_kind:
            continue
        if isinstance(v, AnonymousValuation):
            gains = np.diff(v.profile)
            holds = bool((gains[1:] <= gains[:-1] + tol).all())
        else:
            holds = bool(check_class(v, ValuationClass.submodular, tol))
        if not holds:
            raise ValuationClassError(f"Project {k} is not submodular")


@timing
def greedy_submodular(inst: Instance, tol: float | None = None) -> GreedyResult:
    """
    Greedy welfare maximization for submodular projects: repeatedly
    assigns the (agent, project) pair with the largest marginal value.
    Ties are broken by the lowest agent index, then the lowest project
    index. Each agent is paid its marginal value at assignment time.

    :param inst: the instance
    :param tol: comparison tolerance, defaults to the configured one
    :raises ValuationClassError: if a project is not submodular
    :return: allocation, marginal payments and the greedy trace
    """
    tol = config.tolerance if tol is None else tol
    _require_submodular(inst, tol)
    n, m = inst.num_agents, inst.num_projects
    sets = [0] * m
    payments = np.zeros(n)
    trace = GreedyTrace()
    unassigned = list(range(n))
    while unassigned:
        gains = np.array(
            [[v.marginal(i, sets[k]) for k, v in enumerate(inst.projects)] for i in unassigned]
        )
        best = gains.max()
        row, k = np.argwhere(gains >= best - tol)[0]
        agent = unassigned.pop(int(row))
        k = int(k)
        trace.steps.append(GreedyStep([agent], k, float(gains[row, k]), sets[k]))
        payments[agent] = gains[row, k]
        sets[k] |= 1 << agent
    return GreedyResult(Allocation(tuple(sets), n), payments, trace)


@timing
def greedy_anonymous(inst: Instance, tol: float | None = None) -> GreedyResult:
    """
    Greedy welfare maximization for anonymous projects. Each iteration
    picks a project k and a size t maximizing the average marginal value
    (v_k(|S_k|+t) - v_k(|S_k|)) / t, and assigns the t lowest-indexed
    unallocated agents to k. Among ratios within tolerance of the best,
    the smallest t and then the lowest k is chosen; if no positive ratio
    remains, single agents are still assigned to the first project.

    :param inst: the instance
    :param tol: comparison tolerance, defaults to the configured one
    :raises ValuationClassError: if a project is not anonymous
    :return: allocation, marginal payments and the greedy trace
    """
    tol = config.tolerance if tol is None else tol
    profiles = []
    for k, v in enumerate(inst.projects):
        if not isinstance(v, AnonymousValuation):
            raise ValuationClassError(f"Project {k} of kind '{v.kind}' is not anonymous")
        profiles.append(v.profile)
    n, m = inst.num_agents, inst.num_projects
    sets = [0] * m
    payments = np.zeros(n)
    trace = GreedyTrace()
    unassigned = list(range(n))
    while unassigned:
        sizes = np.arange(1, len(unassigned) + 1)
        # ratios[t-1, k] for adding t agents to project k
        ratios = np.empty((len(sizes), m))
        for k, profile in enumerate(profiles):
            current = agent_sets.size(sets[k])
            ratios[:, k] = (profile[current + sizes] - profile[current]) / sizes
        best = ratios.max()
        t_index, k = np.argwhere(ratios >= best - tol)[0]
        t, k = int(t_index) + 1, int(k)
        agents = unassigned[:t]
        unassigned = unassigned[t:]
        ratio = float(ratios[t_index, k])
        trace.steps.append(GreedyStep(agents, k, ratio, sets[k]))
        payments[agents] = ratio
        sets[k] |= agent_sets.mask_of(agents)
    return GreedyResult(Allocation(tuple(sets), n), payments, trace)
