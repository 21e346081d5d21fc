import math

import numpy as np
import pytest

from coalitioncore import auctions
from coalitioncore.auctions import BidProfile
from coalitioncore.blackbox import stabilize
from coalitioncore.class_solvers import submodular_core
from coalitioncore.model import Allocation, Instance
from coalitioncore.utils import InstanceValidationError, NotAnEquilibriumError, ValuationClassError
from coalitioncore.valuations import AdditiveValuation, CoverageValuation
from coalitioncore.verify import check_stability, project_budget_ratio
from coalitioncore.welfare_opt import brute_force_opt


def _single_item() -> Instance:
    return Instance(1, (AdditiveValuation(1, [1.0]), AdditiveValuation(1, [3.0])), "single-item")


def test_second_price_evaluation():
    """
    The highest bid wins and pays the second highest bid, ties go to the
    lowest buyer
    """
    inst = _single_item()
    outcome = auctions.evaluate(inst, BidProfile(np.array([[3.0], [1.0]])))
    assert outcome.winners == [0]
    assert list(outcome.charges) == [1.0]
    assert list(outcome.utilities) == [0.0, 0.0]
    tie = auctions.evaluate(inst, BidProfile(np.array([[2.0], [2.0]])))
    assert tie.winners == [0] and list(tie.charges) == [2.0]
    assert tie.allocation().sets == (1, 0)


def test_bid_profile_validation():
    with pytest.raises(InstanceValidationError, match="negative"):
        BidProfile(np.array([[1.0, -1.0]]))
    with pytest.raises(InstanceValidationError):
        BidProfile(np.zeros(3))
    with pytest.raises(InstanceValidationError):
        auctions.evaluate(_single_item(), BidProfile(np.zeros((3, 1))))
    profile = BidProfile.from_dict({"bids": [[1, 0], [0, 2]]})
    assert profile.num_buyers == 2 and profile.num_items == 2
    assert profile.to_dict() == {"bids": [[1.0, 0.0], [0.0, 2.0]]}
    with pytest.raises(InstanceValidationError):
        BidProfile.from_dict({"prices": []})


def test_opposing_prices():
    profile = BidProfile(np.array([[1.0, 4.0], [2.0, 3.0], [0.0, 5.0]]))
    assert list(auctions.opposing_prices(profile, 2)) == [2.0, 4.0]
    assert list(auctions.opposing_prices(BidProfile(np.ones((1, 2))), 0)) == [0.0, 0.0]


def test_flipped_exact_core_is_equilibrium(additive_pair):
    """
    Flipping a budget balanced exact core gives an exact equilibrium with
    weak no-overbidding, and turning it back yields a core solution
    """
    sol = submodular_core(additive_pair)
    profile = auctions.flip_core_to_bids(sol)
    assert profile.bids.tolist() == [[3.0, 0.0], [0.0, 2.0]]
    report = auctions.verify_equilibrium(additive_pair, profile)
    assert report.is_equilibrium and report.weak_no_overbidding
    assert report.alpha_star == pytest.approx(1.0)
    assert report.gamma == pytest.approx(1.0)
    assert report.welfare == pytest.approx(5.0)

    core = auctions.bids_to_core(additive_pair, profile)
    assert core.method == "auction"
    assert list(core.payments) == [3.0, 2.0]
    assert check_stability(additive_pair, core).passed


def test_flipped_blackbox_solution(example1):
    """
    The stabilized Example 1 solution is not budget balanced per project,
    so its flipped bids are only approximately an equilibrium: buyer 0
    can take all items at a price of 1.1 and get 2.9 instead of 2.
    """
    sol = stabilize(example1, brute_force_opt(example1)[0])
    profile = auctions.flip_core_to_bids(sol)
    report = auctions.verify_equilibrium(example1, profile)
    assert not report.is_equilibrium
    assert not report.weak_no_overbidding
    first, second = report.buyers
    assert first.current_utility == pytest.approx(2.0)
    assert first.best_utility == pytest.approx(2.9, abs=1e-6)
    assert first.best_response == [0, 1, 2, 3]
    assert second.best_utility == pytest.approx(1.1, abs=1e-6)
    assert report.alpha_star == pytest.approx(1.45, abs=1e-6)
    assert report.alpha_star <= project_budget_ratio(example1, sol) + 1e-6
    with pytest.raises(NotAnEquilibriumError):
        auctions.bids_to_core(example1, profile)


def test_flip_needs_full_allocation(example1):
    sol = stabilize(example1, Allocation.all_on(0, 4, 2))
    sol.allocation = sol.allocation.with_moved(0b1, None)
    with pytest.raises(InstanceValidationError):
        auctions.flip_core_to_bids(sol)


def test_conservativeness():
    inst = _single_item()
    assert auctions.conservativeness(inst, BidProfile(np.array([[2.0], [3.0]]))) == pytest.approx(2.0)
    zero_value = Instance(1, (AdditiveValuation(1, [0.0]),))
    assert math.isinf(auctions.conservativeness(zero_value, BidProfile(np.array([[1.0]]))))


def test_uniform_winner_profile(claim4_small):
    profile = auctions.uniform_winner_profile(claim4_small, 0, 2.5)
    assert profile.bids.tolist() == [[2.5] * 4, [0.0] * 4]


def test_approx_ne_anonymous(claim4_small):
    """
    The flipped envy-free anonymous core of the N = 4 lower bound
    instance; every buyer already gets its best utility.
    """
    result = auctions.approx_ne_anonymous(claim4_small)
    assert np.allclose(result.bids.bids, [[4 / 3, 0, 4 / 3, 4 / 3], [0, 4, 0, 0]])
    assert result.report.alpha == 2.0
    assert result.report.is_equilibrium
    assert result.report.alpha_star == pytest.approx(1.0)
    assert result.report.gamma == pytest.approx(2.0)
    assert result.solution.method == "anonymous-ef"


def test_approx_ne_submodular_from_optimum():
    """
    The item goes to the buyer covering two elements and is priced at
    1.1 times its value, more than the other buyer's value
    """
    inst = Instance(1, (CoverageValuation(1, 2, [[0]]), CoverageValuation(1, 2, [[0, 1]])))
    result = auctions.approx_ne_submodular(inst, epsilon=0.1)
    assert result.moves == []
    assert result.bids.bids.tolist() == [[0.0], [pytest.approx(2.2)]]
    assert result.report.is_equilibrium and result.report.alpha == pytest.approx(1.1)
    assert result.report.gamma <= 1.1 + 1e-9


def test_approx_ne_submodular_moves_items():
    """
    Starting with the item at the buyer that values it 1, the buyer that
    values it 3 takes it over and prices it at 3.3
    """
    inst = _single_item()
    result = auctions.approx_ne_submodular(inst, epsilon=0.1, alloc=Allocation.all_on(0, 1, 2))
    assert result.moves == [{"item": 0, "source": 0, "target": 1, "price": pytest.approx(3.3)}]
    assert result.price_history == [[pytest.approx(1.1)], [pytest.approx(3.3)]]
    assert result.solution.allocation.sets == (0, 1)
    assert result.solution.metrics is not None
    assert result.solution.metrics.extra["move_bound"] == 13
    assert result.report.is_equilibrium
    assert result.report.gamma <= 1.1 + 1e-9


def test_approx_ne_submodular_rejects_instances(claim4_small):
    with pytest.raises(ValuationClassError):
        auctions.approx_ne_submodular(claim4_small)
    with pytest.raises(ValueError):
        auctions.approx_ne_submodular(_single_item(), epsilon=-1)
    with pytest.raises(InstanceValidationError):
        auctions.approx_ne_submodular(_single_item(), alloc=Allocation.empty(1, 2))


def test_smallest_increment():
    inst = Instance(2, (CoverageValuation(2, 3, [[0], [0, 1, 2]]),))
    assert auctions.smallest_increment(inst) == 1.0
