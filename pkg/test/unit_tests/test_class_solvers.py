import numpy as np
import pytest

from coalitioncore import class_solvers
from coalitioncore.model import Allocation, Instance
from coalitioncore.utils import InstanceValidationError, ValuationClassError
from coalitioncore.valuations import (
    AdditiveValuation,
    AnonymousValuation,
    ExplicitValuation,
    XosValuation,
)
from coalitioncore.verify import check_stability


def _xos_and_additive() -> Instance:
    """Either agent alone is worth 2 on project 0, and 1 on project 1"""
    return Instance(
        2, (XosValuation(2, [[2, 0], [0, 2]]), AdditiveValuation(2, [1, 1])), "xos-additive"
    )


def test_submodular_core(additive_pair):
    sol = class_solvers.submodular_core(additive_pair)
    assert sol.method == "submodular"
    assert list(sol.payments) == [3.0, 2.0]
    assert sol.metrics is not None
    assert sol.metrics.beta_budget == pytest.approx(1.0)
    assert sol.metrics.extra["iterations"] == 2
    assert check_stability(additive_pair, sol).passed


def test_anonymous_core_claim4(claim4_small):
    """
    The doubled greedy payments are (4, 4, 0, 0), twice the welfare of 4
    """
    sol = class_solvers.anonymous_core(claim4_small)
    assert sol.allocation.sets == (0b1101, 0b0010)
    assert list(sol.payments) == [4.0, 4.0, 0.0, 0.0]
    assert sol.metrics is not None and sol.metrics.beta_budget == pytest.approx(2.0)
    assert check_stability(claim4_small, sol).passed


def test_anonymous_core_envy_free(claim4_small):
    sol = class_solvers.anonymous_core(claim4_small, envy_free=True)
    assert sol.method == "anonymous-ef"
    assert np.allclose(sol.payments, [4 / 3, 4.0, 4 / 3, 4 / 3])
    assert sol.metrics is not None and sol.metrics.beta_budget == pytest.approx(2.0)
    assert check_stability(claim4_small, sol).passed


def test_anonymous_core_rejects_instances(additive_pair):
    with pytest.raises(ValuationClassError, match="not anonymous"):
        class_solvers.anonymous_core(additive_pair)
    superadditive = Instance(3, (AnonymousValuation(3, [0, 1, 3, 3]),))
    with pytest.raises(ValuationClassError, match="not subadditive"):
        class_solvers.anonymous_core(superadditive)


def test_xos_exact_core(xos_single):
    sol = class_solvers.xos_exact_core(xos_single)
    assert sol.allocation.sets == (0b11,)
    assert list(sol.payments) == [2.0, 0.0]
    assert sol.metrics is not None and sol.metrics.beta_budget == pytest.approx(1.0)
    assert check_stability(xos_single, sol).passed


def test_xos_exact_core_needs_clauses(claim4_small):
    with pytest.raises(ValuationClassError):
        class_solvers.xos_exact_core(claim4_small)


def test_clause_prices_and_marginals():
    inst = _xos_and_additive()
    alloc = Allocation.from_assignment([0, 0], 2)
    assert list(class_solvers.clause_prices(inst, alloc)) == [2.0, 0.0]
    assert list(class_solvers.marginal_contributions(inst, alloc)) == [0.0, 0.0]
    split = Allocation.from_assignment([1, 0], 2)
    assert list(class_solvers.marginal_contributions(inst, split)) == [1.0, 2.0]


def test_best_response_single_agent_move(coverage_pair):
    """
    Both agents start on project 0, where agent 1 adds nothing. Agent 1
    moves to project 1, after which each agent is paid 1 + 0.1·2/2.
    """
    start = Allocation.all_on(0, 2, 2)
    sol = class_solvers.best_response_core(coverage_pair, start, epsilon=0.1)
    assert sol.trace == [{"project": 1, "agents": [1], "welfare": 2.0}]
    assert sol.allocation.sets == (0b01, 0b10)
    assert np.allclose(sol.payments, [1.1, 1.1])
    assert sol.metrics is not None
    assert sol.metrics.extra["iterations"] == 1
    assert sol.metrics.total_payment == pytest.approx(1.1 * sol.metrics.welfare)
    assert check_stability(coverage_pair, sol).passed


def test_best_response_group_move():
    """
    A group deviation found with the demand oracle moves both agents at once
    """
    inst = Instance(2, (XosValuation(2, [[1, 1]]), XosValuation(2, [[0, 0]])))
    sol = class_solvers.best_response_core(inst, Allocation.all_on(1, 2, 2), epsilon=0.1)
    assert sol.trace == [{"project": 0, "agents": [0, 1], "welfare": 2.0}]
    assert np.allclose(sol.payments, [1.1, 1.1])
    assert check_stability(inst, sol).passed


def test_best_response_arguments(coverage_pair, claim4_small):
    with pytest.raises(ValueError):
        class_solvers.best_response_core(coverage_pair, Allocation.all_on(0, 2, 2), epsilon=0)
    with pytest.raises(ValuationClassError):
        class_solvers.best_response_core(claim4_small, Allocation.all_on(0, 4, 2))


def test_xos_no_oracle_core():
    """
    Agent 0 adds nothing on project 0 and moves to the empty project 1.
    The payments of each project then sum up to its dual prices plus its
    slack, so the total stays within the LP optimum.
    """
    inst = _xos_and_additive()
    sol = class_solvers.xos_no_oracle_core(inst, Allocation.all_on(0, 2, 2))
    assert sol.method == "xos-dual"
    assert sol.allocation.sets == (0b10, 0b01)
    assert sol.trace == [{"agent": 0, "source": 0, "target": 1}]
    assert sol.metrics is not None and sol.metrics.dual_objective is not None
    assert sol.metrics.welfare == pytest.approx(3.0)
    assert sol.metrics.total_payment <= sol.metrics.dual_objective + 1e-6
    assert check_stability(inst, sol, tol=1e-6).passed

    with pytest.raises(InstanceValidationError):
        class_solvers.xos_no_oracle_core(inst, Allocation.empty(2, 2))


def test_xos_no_oracle_core_rejects_non_xos():
    """
    Any two agents are worth 1 but all three are worth 2, which no
    dominated additive clause reaches
    """
    inst = Instance(3, (ExplicitValuation(3, [0, 1, 1, 1, 1, 1, 1, 2]),), "not-xos")
    with pytest.raises(ValuationClassError):
        class_solvers.xos_no_oracle_core(inst, Allocation.all_on(0, 3, 1))
