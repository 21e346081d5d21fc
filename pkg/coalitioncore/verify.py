"""
Exhaustive verification of solutions: stability scans, budget factors,
the minimal payments that stabilize an allocation, and the search for
the smallest budget factor over all allocations.
"""

from dataclasses import dataclass, field
import logging

from dataclasses_json import dataclass_json
import numpy as np
from scipy.optimize import linprog  # type: ignore
from tqdm import tqdm

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
    ScaleGuardError,
    safe_ratio,
    timing,
)
from coalitioncore.welfare_opt import HIGHS_OPTIONS


@dataclass_json
@dataclass
class StabilityReport:
    """
    Result of an exhaustive stability scan. The worst deviation is the
    project k and the agent set W ⊇ S_k with the largest excess
    v_k(W) - α·p(W).
    """

    alpha: float
    passed: bool
    #: smallest α at which the solution is α-stable
    alpha_star: float
    welfare: float
    total_payment: float
    beta: float | None = None
    worst_project: int | None = None
    #: the deviating agents T = W \ S_k
    worst_deviation: list[int] = field(default_factory=list)
    worst_excess: float = 0.0

    def summary(self) -> str:
        status = "stable" if self.passed else "NOT stable"
        text = f"{status} at alpha={self.alpha:g} (alpha*={self.alpha_star:.6g}"
        if self.beta is not None:
            text += f", beta={self.beta:.6g}"
        text += ")"
        if not self.passed:
            text += (
                f"; agents {self.worst_deviation} gain {self.worst_excess:.6g} by "
                f"joining project {self.worst_project}"
            )
        return text


@dataclass
class SubsidyResult:
    """Minimal payments that make an allocation fully stable"""

    total: float
    payments: np.ndarray
    beta: float


def _ratios(values: np.ndarray, paid: np.ndarray, tol: float) -> np.ndarray:
    # elementwise safe_ratio
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = values / paid
    return np.where(paid > tol, ratios, np.where(values > tol, np.inf, 1.0))


def stability_scan(
    inst: Instance,
    alloc: Allocation,
    payments: np.ndarray,
    alpha: float = 1.0,
    tol: float | None = None,
) -> StabilityReport:
    """
    Checks v_k(W) <= α·Σ_{i∈W} p_i for every project k and every agent
    set W ⊇ S_k by exhaustive enumeration.

    :param inst: the instance
    :param alloc: the allocation
    :param payments: the payments of all agents, including unassigned ones
    :param alpha: the stability factor to check
    :param tol: comparison tolerance, defaults to the configured one
    :raises ScaleGuardError: if N exceeds the exhaustive limit
    :return: the stability report with the worst deviation
    """
    tol = config.tolerance if tol is None else tol
    n = inst.num_agents
    agent_sets.require_exhaustive(n, "stability check")
    paid_all = agent_sets.set_payments(np.asarray(payments, dtype=float))
    worst_excess = -np.inf
    worst: tuple[int, int] | None = None
    alpha_star = -np.inf
    for k, (v, s) in enumerate(zip(inst.projects, alloc.sets)):
        candidates = agent_sets.supersets(s, n)
        if not s:
            candidates = candidates[1:]
        if not len(candidates):
            continue
        values = v.table[candidates]
        paid = paid_all[candidates]
        excess = values - alpha * paid
        index = int(np.argmax(excess))
        if excess[index] > worst_excess:
            worst_excess = float(excess[index])
            worst = (k, int(candidates[index]) & ~s)
        alpha_star = max(alpha_star, float(_ratios(values, paid, tol).max()))

    welfare = social_welfare(inst, alloc)
    total = float(np.sum(payments))
    report = StabilityReport(
        alpha=alpha,
        passed=worst_excess <= tol,
        alpha_star=float(alpha_star) if worst is not None else 1.0,
        welfare=welfare,
        total_payment=total,
        beta=total / welfare if welfare > tol else None,
        worst_project=worst[0] if worst else None,
        worst_deviation=agent_sets.members(worst[1]) if worst else [],
        worst_excess=float(worst_excess) if worst else 0.0,
    )
    logging.debug(f"Stability scan: {report.summary()}")
    return report


def check_stability(
    inst: Instance, sol: Solution, alpha: float = 1.0, tol: float | None = None
) -> StabilityReport:
    return stability_scan(inst, sol.allocation, sol.payments, alpha, tol)


def verification_tolerance(sol: Solution) -> float:
    """
    Tolerance for certifying a solution: payments derived from an LP
    solution are checked with the LP tolerance.
    """
    return config.lp_tolerance if sol.dual is not None else config.tolerance


@timing
def certify(
    inst: Instance,
    sol: Solution,
    alpha: float = 1.0,
    opt_welfare: float | None = None,
    tol: float | None = None,
) -> StabilityReport:
    """
    Verifies a solution and stores the recomputed metrics in it.

    :param inst: the instance
    :param sol: the solution to certify; its metrics are updated
    :param alpha: the stability factor to check
    :param opt_welfare: the optimal welfare, if known
    :param tol: comparison tolerance, defaults to verification_tolerance
    :return: the stability report
    """
    tol = verification_tolerance(sol) if tol is None else tol
    report = check_stability(inst, sol, alpha, tol)
    if sol.metrics is None:
        sol.metrics = basic_metrics(inst, sol.allocation, sol.payments)
    sol.metrics.welfare = report.welfare
    sol.metrics.total_payment = report.total_payment
    sol.metrics.beta_budget = report.beta
    sol.metrics.alpha_stability = report.alpha_star
    if opt_welfare is not None:
        sol.metrics.welfare_ratio_vs_opt = safe_ratio(report.welfare, opt_welfare, tol)
    return report


def min_stable_subsidy(
    inst: Instance, alloc: Allocation, tol: float | None = None
) -> SubsidyResult:
    """
    Solves the cost of stability LP of an allocation:

        min Σ p_i  s.t.  Σ_{i∈W} p_i >= v_k(W)  for all k and W ⊇ S_k,  p >= 0

    :param inst: the instance
    :param alloc: the allocation to stabilize
    :param tol: comparison tolerance, defaults to the configured one
    :raises InstanceValidationError: if the allocation has zero welfare
    :raises InternalInvariantError: if the LP result is infeasible
    :return: the minimal total payment, the payments and the budget factor
    """
    tol = config.tolerance if tol is None else tol
    n = inst.num_agents
    agent_sets.require_exhaustive(n, "cost of stability LP")
    welfare = social_welfare(inst, alloc)
    if welfare <= tol:
        raise InstanceValidationError(
            "The budget factor is undefined for an allocation with zero welfare"
        )
    bits = agent_sets.membership_matrix(n)
    rows = []
    bounds_rhs = []
    for v, s in zip(inst.projects, alloc.sets):
        candidates = agent_sets.supersets(s, n)
        rows.append(bits[candidates])
        bounds_rhs.append(v.table[candidates])
    a_ub = -np.vstack(rows)
    b_ub = -np.concatenate(bounds_rhs)
    result = linprog(
        c=np.ones(n),
        A_ub=a_ub,
        b_ub=b_ub,
        bounds=[(0, None)] * n,
        method="highs",
        options=HIGHS_OPTIONS,
    )
    if result.status != 0:
        raise InternalInvariantError(f"Cost of stability LP could not be solved: {result.message}")
    payments = np.maximum(result.x, 0.0)
    violation = float(np.max(a_ub @ payments - b_ub))
    if violation > config.lp_tolerance:
        raise InternalInvariantError(f"Cost of stability LP violates a constraint by {violation}")
    total = float(payments.sum())
    return SubsidyResult(total, payments, total / welfare)


@timing
def min_beta_over_allocations(
    inst: Instance, tol: float | None = None, show_progress: bool | None = None
) -> tuple[float, Allocation]:
    """
    Computes the smallest budget factor of any fully stable solution by
    solving the cost of stability LP for every full assignment. A result
    above 1 certifies that no exact core exists. Allocations with zero
    welfare are skipped.

    :param inst: the instance
    :param tol: comparison tolerance, defaults to the configured one
    :param show_progress: whether to show a progress bar; by default only
                          on terminals
    :raises ScaleGuardError: if m^N exceeds the configured limit
    :return: the smallest budget factor and an allocation attaining it
    """
    tol = config.tolerance if tol is None else tol
    n, m = inst.num_agents, inst.num_projects
    total = m**n
    if total > config.lower_bound_limit:
        raise ScaleGuardError(
            f"Lower bound search would enumerate {m}^{n} = {total} allocations "
            f"(limit {config.lower_bound_limit})"
        )
    best_beta = np.inf
    best_alloc: Allocation | None = None
    powers = m ** np.arange(n - 1, -1, -1)
    disable = None if show_progress is None else not show_progress
    for code in tqdm(range(total), desc="allocations", disable=disable):
        assignment = [int(d) for d in (code // powers) % m]
        alloc = Allocation.from_assignment(assignment, m)
        if social_welfare(inst, alloc) <= tol:
            continue
        subsidy = min_stable_subsidy(inst, alloc, tol)
        if subsidy.beta < best_beta - tol:
            best_beta, best_alloc = subsidy.beta, alloc
    if best_alloc is None:
        raise InstanceValidationError("Every allocation of the instance has zero welfare")
    logging.debug(f"Smallest budget factor {best_beta} at {best_alloc.describe()}")
    return float(best_beta), best_alloc


def scale_to_budget_balance(inst: Instance, sol: Solution) -> Solution:
    """
    Scales fully stable payments with budget factor β down by β. The
    resulting budget balanced solution is β-stable.
    """
    welfare = social_welfare(inst, sol.allocation)
    total = float(np.sum(sol.payments))
    if welfare <= config.tolerance or total <= config.tolerance:
        raise InstanceValidationError("Cannot rescale payments of a zero-welfare solution")
    payments = sol.payments * (welfare / total)
    return Solution(sol.allocation, payments, None, f"{sol.method}-budget-balanced")


def project_budget_ratio(inst: Instance, sol: Solution, tol: float | None = None) -> float:
    """
    Returns the largest ratio of the payments of a nonempty project's
    members to the project's value.
    """
    tol = config.tolerance if tol is None else tol
    ratios = [
        safe_ratio(float(sol.payments[agent_sets.members(s)].sum()), v.value(s), tol)
        for v, s in zip(inst.projects, sol.allocation.sets)
        if s
    ]
    return max(ratios, default=1.0)
