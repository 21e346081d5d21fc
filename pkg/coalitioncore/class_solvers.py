"""
Core constructions for special valuation classes: submodular, anonymous
and XoS projects.
"""

import logging
import math

import numpy as np

from coalitioncore import agent_sets
from coalitioncore.config import config
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
    ValuationClassError,
    timing,
)
from coalitioncore.valuations import AnonymousValuation, ValuationClass, check_class
from coalitioncore.welfare_opt import (
    brute_force_opt,
    greedy_anonymous,
    greedy_submodular,
    solve_config_lp,
)


def _require_clause_oracle(inst: Instance) -> None:
    for k, v in enumerate(inst.projects):
        if not v.has_clause_oracle():
            raise ValuationClassError(
                f"Project {k} of kind '{v.kind}' has no XoS clause representation"
            )


def clause_prices(inst: Instance, alloc: Allocation) -> np.ndarray:
    """
    Pays every agent its weight in the maximizing XoS clause of its
    project. The payments of each project sum up to its value.

    :param inst: the instance
    :param alloc: the allocation
    :return: the clause payments; unassigned agents get 0
    """
    payments = np.zeros(inst.num_agents)
    for v, s in zip(inst.projects, alloc.sets):
        if s:
            weights = np.array(v.xos_clause(s).weights)
            members = agent_sets.members(s)
            payments[members] = weights[members]
    return payments


@timing
def submodular_core(inst: Instance, tol: float | None = None) -> Solution:
    """
    Exactly stable and budget balanced solution for submodular projects:
    the greedy allocation with marginal payments.
    """
    greedy = greedy_submodular(inst, tol)
    metrics = basic_metrics(inst, greedy.allocation, greedy.payments)
    metrics.extra["iterations"] = len(greedy.trace.steps)
    return Solution(
        greedy.allocation, greedy.payments, metrics, "submodular", trace=greedy.trace.to_list()
    )


@timing
def anonymous_core(
    inst: Instance, envy_free: bool = False, tol: float | None = None
) -> Solution:
    """
    Stable solution for anonymous subadditive projects with payments of
    exactly twice the welfare. Agents are allocated by the anonymous
    greedy algorithm and paid twice their marginal value, or, in the
    envy-free variant, twice the average value of their project.

    :param inst: the instance
    :param envy_free: whether all members of a project get equal payments
    :param tol: comparison tolerance, defaults to the configured one
    :raises ValuationClassError: if a project is not anonymous and subadditive
    :return: the stable solution
    """
    for k, v in enumerate(inst.projects):
        if not isinstance(v, AnonymousValuation):
            raise ValuationClassError(f"Project {k} of kind '{v.kind}' is not anonymous")
        check = v.is_subadditive_profile(tol)
        if not check:
            raise ValuationClassError(
                f"Anonymous profile of project {k} is not subadditive for sizes {check.witness}"
            )
    greedy = greedy_anonymous(inst, tol)
    alloc = greedy.allocation
    if envy_free:
        payments = np.zeros(inst.num_agents)
        for v, s in zip(inst.projects, alloc.sets):
            if s:
                payments[agent_sets.members(s)] = 2 * v.value(s) / agent_sets.size(s)
    else:
        payments = 2 * greedy.payments
    metrics = basic_metrics(inst, alloc, payments)
    metrics.extra["iterations"] = len(greedy.trace.steps)
    method = "anonymous-ef" if envy_free else "anonymous"
    return Solution(alloc, payments, metrics, method, trace=greedy.trace.to_list())


@timing
def xos_exact_core(inst: Instance, tol: float | None = None) -> Solution:
    """
    Exact core for XoS projects: the welfare optimum with each agent paid
    its weight in the maximizing clause of its project.

    :param inst: the instance
    :param tol: comparison tolerance, defaults to the configured one
    :raises ValuationClassError: if a project has no clause representation
    :raises ScaleGuardError: if the brute force optimum is out of reach
    :return: the exact core solution
    """
    _require_clause_oracle(inst)
    alloc, welfare = brute_force_opt(inst, tol)
    payments = clause_prices(inst, alloc)
    metrics = basic_metrics(inst, alloc, payments)
    metrics.welfare_ratio_vs_opt = 1.0
    return Solution(alloc, payments, metrics, "xos-exact")


def _best_response_guard(inst: Instance, welfare: float, epsilon: float) -> int:
    # for subadditive projects, OPT is bounded by the best singleton values
    upper = float(np.max([v.singleton_values() for v in inst.projects], axis=0).sum())
    if welfare <= config.tolerance:
        return config.max_iterations
    bound = math.ceil(inst.num_agents * max(upper / welfare - 1, 0) / epsilon)
    return 10 * max(bound, 1)


@timing
def best_response_core(
    inst: Instance,
    alloc: Allocation,
    epsilon: float | None = None,
    tol: float | None = None,
) -> Solution:
    """
    Best-response dynamics with XoS clause prices. Each agent is paid its
    clause weight plus a markup of ε/N times the current welfare. While
    some group T gains more by joining a project k than the current
    payments of T, the group moves to k. Groups are found with the demand
    oracle on the marginal valuation v_k(· | X_k); for submodular kinds a
    single improving agent suffices. Projects are scanned in index order
    and the first improving deviation is accepted.

    Every accepted move increases the welfare by more than ε/N of its
    current value, and the final payments are fully stable with a total
    of (1 + ε) times the welfare.

    :param inst: the instance
    :param alloc: the start allocation
    :param epsilon: the markup factor, defaults to the configured one
    :param tol: comparison tolerance, defaults to the configured one
    :raises ValuationClassError: if a project has no clause representation
    :raises InternalInvariantError: if the dynamics do not terminate
    :return: the stable solution; its trace lists the accepted moves
    """
    tol = config.tolerance if tol is None else tol
    epsilon = config.epsilon if epsilon is None else epsilon
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive (got {epsilon})")
    _require_clause_oracle(inst)
    n = inst.num_agents
    current = alloc
    welfare = social_welfare(inst, current)
    start_welfare = welfare
    guard = _best_response_guard(inst, welfare, epsilon)
    trace = []

    def price(x: Allocation, sw: float) -> np.ndarray:
        return clause_prices(inst, x) + epsilon * sw / n

    payments = price(current, welfare)
    while True:
        deviation = None
        for k, v in enumerate(inst.projects):
            base = current.sets[k]
            if v.submodular_kind:
                for i in range(n):
                    if not agent_sets.contains(base, i) and v.marginal(i, base) > payments[i] + tol:
                        deviation = (k, 1 << i)
                        break
            else:
                group = v.demand(payments, base, tol)
                gain = v.value(base | group) - v.value(base)
                if group and gain - payments[agent_sets.members(group)].sum() > tol:
                    deviation = (k, group)
            if deviation is not None:
                break
        if deviation is None:
            break
        k, group = deviation
        current = current.with_moved(group, k)
        new_welfare = social_welfare(inst, current)
        if new_welfare < welfare - tol:
            raise InternalInvariantError(
                f"Best response move decreased welfare from {welfare} to {new_welfare}"
            )
        welfare = new_welfare
        payments = price(current, welfare)
        trace.append(
            {"project": k, "agents": agent_sets.members(group), "welfare": welfare}
        )
        if len(trace) > guard:
            raise InternalInvariantError(
                f"Best response dynamics did not terminate within {guard} moves"
            )
    metrics = basic_metrics(inst, current, payments)
    metrics.extra.update(
        {"iterations": len(trace), "epsilon": epsilon, "input_welfare": start_welfare}
    )
    logging.info(f"Best response dynamics accepted {len(trace)} move(s), welfare {welfare:.4f}")
    return Solution(current, payments, metrics, "best-response", trace=trace)


def marginal_contributions(inst: Instance, alloc: Allocation) -> np.ndarray:
    """
    Returns marg_i = v_k(S_k) - v_k(S_k - i) for each agent i on project
    k, and 0 for unassigned agents.
    """
    marg = np.zeros(inst.num_agents)
    for v, s in zip(inst.projects, alloc.sets):
        full = v.value(s)
        for i in agent_sets.members(s):
            marg[i] = full - v.value(s & ~(1 << i))
    return marg


@timing
def xos_no_oracle_core(
    inst: Instance, alloc: Allocation, tol: float | None = None
) -> Solution:
    """
    Stable solution for XoS projects that only needs the configuration LP
    dual. Single agents first move to empty projects as long as their
    standalone value there exceeds their marginal contribution. Then each
    project splits its members into high value agents (marginal above the
    dual price) and low value agents. Low value agents get their dual
    price, high value agents their marginal plus an equal share of the
    residual slack z_k = Σ_H p* + z*_k - Σ_H marg. If there are no high
    value agents, the lowest-indexed member receives the whole slack.

    :param inst: the instance
    :param alloc: the start allocation
    :param tol: comparison tolerance, defaults to the configured one
    :raises ValuationClassError: if a project is not XoS
    :raises InternalInvariantError: if a residual slack is negative
    :return: the stable solution
    """
    tol = config.tolerance if tol is None else tol
    if not alloc.is_full():
        raise InstanceValidationError("The start allocation must assign every agent")
    for k, v in enumerate(inst.projects):
        if not v.has_clause_oracle() and not check_class(v, ValuationClass.xos, tol):
            raise ValuationClassError(f"Project {k} of kind '{v.kind}' is not XoS")
    objective, dual = solve_config_lp(inst)
    singles = np.array([v.singleton_values() for v in inst.projects])
    current = alloc
    moves = []
    while True:
        empty = sorted(current.empty_projects())
        if not empty:
            break
        marg = marginal_contributions(inst, current)
        gains = singles[empty]
        improving = (gains > marg + tol).any(axis=0)
        if not improving.any():
            break
        agent = int(np.flatnonzero(improving)[0])
        target = empty[int(np.argmax(gains[:, agent]))]
        moves.append({"agent": agent, "source": current.project_of(agent), "target": target})
        current = current.with_moved(1 << agent, target)
        if len(moves) > config.max_iterations:
            raise InternalInvariantError("Local moves to empty projects did not terminate")

    marg = marginal_contributions(inst, current)
    p_star, z_star = dual.p_star, dual.z_star
    payments = p_star.copy()
    for k, s in enumerate(current.sets):
        if not s:
            continue
        members = agent_sets.members(s)
        high = [i for i in members if marg[i] > p_star[i] + tol]
        residual = float(p_star[high].sum() + z_star[k] - marg[high].sum())
        if residual < 0:
            if residual < -config.slack_clamp:
                raise InternalInvariantError(
                    f"Residual slack of project {k} is negative: {residual}"
                )
            residual = 0.0
        if high:
            payments[high] = marg[high] + residual / len(high)
        else:
            payments[members[0]] += residual
    metrics = basic_metrics(inst, current, payments)
    metrics.dual_objective = objective
    metrics.extra.update(
        {"iterations": len(moves), "input_welfare": social_welfare(inst, alloc)}
    )
    return Solution(current, payments, metrics, "xos-dual", dual, moves)
