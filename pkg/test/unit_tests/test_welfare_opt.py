import dataclasses

import numpy as np
import pytest

from coalitioncore.generators import Family, GeneratorSpec, generate
from coalitioncore.model import Allocation, Instance
from coalitioncore.utils import InternalInvariantError, ScaleGuardError, ValuationClassError
from coalitioncore.valuations import AdditiveValuation, AnonymousValuation, ExplicitValuation
from coalitioncore.welfare_opt import (
    brute_force_opt,
    check_dual,
    greedy_anonymous,
    greedy_submodular,
    solve_config_lp,
)


def test_brute_force_example1(example1):
    alloc, welfare = brute_force_opt(example1)
    assert welfare == pytest.approx(4.0)
    assert alloc.assignment() == [0, 0, 0, 0], "Ties must go to the lexicographically first assignment"


def test_brute_force_single_project():
    inst = Instance(3, (AnonymousValuation(3, [0, 1, 2, 3]),))
    alloc, welfare = brute_force_opt(inst)
    assert alloc.is_full() and welfare == 3.0


def test_brute_force_scale_guard():
    inst = Instance(
        20, tuple(AnonymousValuation(20, np.arange(21, dtype=float)) for _ in range(3))
    )
    with pytest.raises(ScaleGuardError):
        brute_force_opt(inst)


def test_config_lp_example1(example1):
    """
    The dual optimum of Example 1 is p* = 2/3 for every agent with slacks
    z* = (4/3, 13/30) and objective 133/30.
    """
    objective, dual = solve_config_lp(example1)
    assert objective == pytest.approx(133 / 30, abs=1e-6)
    assert np.allclose(dual.p_star, 2 / 3, atol=1e-6)
    assert np.allclose(dual.z_star, [4 / 3, 13 / 30], atol=1e-6)
    assert dual.max_violation(example1) <= 1e-6
    assert dual.slackness_residual <= 1e-6
    weights = sum(w for _, _, w in dual.primal_support)
    assert weights > 0, "Missing fractional primal support"


def test_check_dual_rejects_tampered_duals(example1):
    _, dual = solve_config_lp(example1)
    check_dual(example1, dual)
    cheap = dataclasses.replace(dual, prices=[0.0] * 4, slacks=[0.0, 0.0], objective=0.0)
    with pytest.raises(InternalInvariantError, match="violates"):
        check_dual(example1, cheap)
    loose = dataclasses.replace(dual, slackness_residual=1.0)
    with pytest.raises(InternalInvariantError, match="slackness"):
        check_dual(example1, loose)


def test_config_lp_integral_instance(additive_pair):
    """
    For additive projects, the LP optimum is the welfare optimum
    """
    objective, dual = solve_config_lp(additive_pair)
    _, welfare = brute_force_opt(additive_pair)
    assert objective == pytest.approx(welfare, abs=1e-6)
    assert objective == pytest.approx(5.0, abs=1e-6)
    assert dual.max_violation(additive_pair) <= 1e-6


def test_greedy_submodular(additive_pair):
    result = greedy_submodular(additive_pair)
    assert result.allocation.sets == (0b01, 0b10)
    assert list(result.payments) == [3.0, 2.0]
    assert result.trace.marginals() == [3.0, 2.0]
    assert result.trace.is_non_increasing()
    assert result.trace.steps[1].before == 0


def test_greedy_submodular_rejects_other_classes(claim4_small):
    with pytest.raises(ValuationClassError):
        greedy_submodular(claim4_small)
    superadditive = Instance(2, (ExplicitValuation(2, [0, 1, 1, 3]),))
    with pytest.raises(ValuationClassError):
        greedy_submodular(superadditive)
    concave = Instance(2, (AnonymousValuation(2, [0, 2, 3]), AdditiveValuation(2, [1, 1])))
    assert greedy_submodular(concave).allocation.is_full()


def test_greedy_anonymous_claim4(claim4_small):
    """
    Tests the anonymous greedy algorithm on the N = 4 lower bound instance
    """
    result = greedy_anonymous(claim4_small)
    assert result.allocation.sets == (0b1101, 0b0010)
    assert list(result.payments) == [2.0, 2.0, 0.0, 0.0]
    assert [s.agents for s in result.trace.steps] == [[0], [1], [2], [3]]
    assert result.trace.is_non_increasing()


def test_greedy_anonymous_assigns_groups():
    """
    A project whose value only rises at size 3 is filled with three
    agents at once. Equal ratios prefer the smaller group.
    """
    inst = generate(GeneratorSpec(Family.claim4_part1, agents=4))
    step_project = AnonymousValuation(4, [0, 0, 0, 6, 6])
    inst = Instance(4, (step_project, inst.projects[1]))
    result = greedy_anonymous(inst)
    first, second = result.trace.steps
    assert first.agents == [0] and first.project == 1
    assert second.agents == [1, 2, 3] and second.project == 0
    assert second.marginal == pytest.approx(2.0)
    assert result.allocation.sets == (0b1110, 0b0001)


def test_greedy_anonymous_rejects_other_kinds(additive_pair):
    with pytest.raises(ValuationClassError):
        greedy_anonymous(additive_pair)
