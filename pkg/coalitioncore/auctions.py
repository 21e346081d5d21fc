"""
Simultaneous second-price item auctions derived from a game instance:
projects become buyers and agents become items. Contains the
transformation of core solutions into bid profiles and back, the
evaluation and equilibrium verification of bid profiles, and the
constructions of approximate equilibria for anonymous and submodular
buyers.
"""

from dataclasses import dataclass, field
import logging
import math
from typing import Any

from dataclasses_json import dataclass_json
import numpy as np

from coalitioncore import agent_sets
from coalitioncore.agent_sets import AgentSet
from coalitioncore.class_solvers import anonymous_core
from coalitioncore.config import config
from coalitioncore.model import Allocation, Instance, Solution, basic_metrics
from coalitioncore.utils import (
    InstanceValidationError,
    InternalInvariantError,
    NotAnEquilibriumError,
    ValuationClassError,
    safe_ratio,
    timing,
)
from coalitioncore.valuations import Valuation
from coalitioncore.welfare_opt import brute_force_opt


@dataclass(eq=False)
class BidProfile:
    """
    Nonnegative bids of every buyer (project) on every item (agent), as
    matrix of shape (m, N).
    """

    bids: np.ndarray

    def __post_init__(self):
        self.bids = np.array(self.bids, dtype=float)
        if self.bids.ndim != 2 or 0 in self.bids.shape:
            raise InstanceValidationError(
                f"bids: expected a nonempty buyers × items matrix (got shape {self.bids.shape})"
            )
        if (self.bids < -config.tolerance).any():
            k, i = np.argwhere(self.bids < -config.tolerance)[0]
            raise InstanceValidationError(f"bids[{k}][{i}]: negative bid {self.bids[k, i]}")

    @property
    def num_buyers(self) -> int:
        return self.bids.shape[0]

    @property
    def num_items(self) -> int:
        return self.bids.shape[1]

    def check_instance(self, inst: Instance) -> None:
        if self.bids.shape != (inst.num_projects, inst.num_agents):
            raise InstanceValidationError(
                f"bids: shape {self.bids.shape} does not match instance {inst}"
            )

    def to_dict(self) -> dict[str, Any]:
        return {"bids": self.bids.tolist()}

    @staticmethod
    def from_dict(data: dict[str, Any]) -> "BidProfile":
        if not isinstance(data, dict) or "bids" not in data:
            raise InstanceValidationError("bids: missing bid matrix")
        return BidProfile(np.array(data["bids"], dtype=float))


@dataclass
class AuctionOutcome:
    #: winning buyer of each item
    winners: list[int]
    #: second-price charge of each item
    charges: np.ndarray
    #: items won by each buyer
    won: tuple[AgentSet, ...]
    #: value of the won items minus the charges, per buyer
    utilities: np.ndarray

    def allocation(self) -> Allocation:
        return Allocation(self.won, len(self.winners))


@dataclass_json
@dataclass
class BuyerReport:
    buyer: int
    current_utility: float
    best_utility: float
    #: best-response utility divided by the current utility
    ratio: float
    #: the items of a best response
    best_response: list[int]


@dataclass_json
@dataclass
class EquilibriumReport:
    """
    Verification result of a bid profile
    """

    alpha: float
    is_equilibrium: bool
    #: smallest α for which the profile is an α-approximate equilibrium
    alpha_star: float
    weak_no_overbidding: bool
    #: smallest γ for which the bids are γ-conservative
    gamma: float
    welfare: float
    buyers: list[BuyerReport] = field(default_factory=list)

    def summary(self) -> str:
        status = "equilibrium" if self.is_equilibrium else "NOT an equilibrium"
        return (
            f"{status} at alpha={self.alpha:g} (alpha*={self.alpha_star:.6g}, "
            f"gamma={self.gamma:.6g}, weak no-overbidding: {self.weak_no_overbidding})"
        )


@dataclass
class ApproxEquilibrium:
    """Bid profile constructed by an approximate equilibrium algorithm"""

    bids: BidProfile
    report: EquilibriumReport
    solution: Solution
    moves: list[dict[str, Any]] = field(default_factory=list)
    #: item prices after every move, starting with the initial prices
    price_history: list[list[float]] = field(default_factory=list)


def flip_core_to_bids(sol: Solution) -> BidProfile:
    """
    Every project bids the payment of each of its members, and nothing on
    other agents.

    :param sol: a solution that assigns every agent
    :raises InstanceValidationError: if an agent is unassigned
    :return: the bid profile
    """
    alloc = sol.allocation
    if not alloc.is_full():
        raise InstanceValidationError("Only solutions that assign every agent can be flipped")
    bids = np.zeros((alloc.num_projects, alloc.num_agents))
    for k, s in enumerate(alloc.sets):
        members = agent_sets.members(s)
        bids[k, members] = sol.payments[members]
    return BidProfile(bids)


def evaluate(inst: Instance, profile: BidProfile, tol: float | None = None) -> AuctionOutcome:
    """
    Runs one second-price auction per item. The highest bidder wins, ties
    go to the lowest buyer index, and the winner pays the highest bid of
    the other buyers.

    :param inst: the instance
    :param profile: the bids
    :param tol: comparison tolerance, defaults to the configured one
    :return: winners, charges and utilities
    """
    tol = config.tolerance if tol is None else tol
    profile.check_instance(inst)
    bids = profile.bids
    m, n = bids.shape
    top = bids.max(axis=0)
    winners = [int(np.flatnonzero(bids[:, i] >= top[i] - tol)[0]) for i in range(n)]
    charges = np.zeros(n)
    if m > 1:
        for i, k in enumerate(winners):
            charges[i] = np.delete(bids[:, i], k).max()
    won = [0] * m
    for i, k in enumerate(winners):
        won[k] |= 1 << i
    utilities = np.array(
        [
            v.value(s) - charges[agent_sets.members(s)].sum()
            for v, s in zip(inst.projects, won)
        ]
    )
    return AuctionOutcome(winners, charges, tuple(won), utilities)


def opposing_prices(profile: BidProfile, buyer: int) -> np.ndarray:
    """
    Returns the highest bid of the other buyers on every item, which is
    what the buyer has to pay to win it.
    """
    others = np.delete(profile.bids, buyer, axis=0)
    if not len(others):
        return np.zeros(profile.num_items)
    return others.max(axis=0)


def best_response_value(
    inst: Instance, profile: BidProfile, buyer: int, tol: float | None = None
) -> tuple[float, AgentSet]:
    """
    Computes the best utility a buyer can reach by changing its bids. A
    deviating buyer wins any item at the highest opposing bid, so the best
    response is a demand query at these prices.

    :param inst: the instance
    :param profile: the bids
    :param buyer: the deviating buyer
    :param tol: comparison tolerance, defaults to the configured one
    :return: the best utility and a set of items attaining it
    """
    tol = config.tolerance if tol is None else tol
    prices = opposing_prices(profile, buyer)
    v = inst.projects[buyer]
    items = v.demand(prices, tol=tol)
    return v.value(items) - float(prices[agent_sets.members(items)].sum()), items


def conservativeness(inst: Instance, profile: BidProfile, tol: float | None = None) -> float:
    """
    Returns the smallest γ with Σ_{i∈T} b_k(i) <= γ·v_k(T) for all buyers
    k and item sets T, using 0/0 = 1 and x/0 = inf.
    """
    tol = config.tolerance if tol is None else tol
    agent_sets.require_exhaustive(inst.num_agents, "conservativeness check")
    gamma = 1.0
    for v, b in zip(inst.projects, profile.bids):
        totals = agent_sets.set_payments(b)[1:]
        values = v.table[1:]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(
                values > tol, totals / values, np.where(totals > tol, np.inf, 1.0)
            )
        gamma = max(gamma, float(ratios.max()))
    return gamma


@timing
def verify_equilibrium(
    inst: Instance, profile: BidProfile, alpha: float = 1.0, tol: float | None = None
) -> EquilibriumReport:
    """
    Checks whether a bid profile is an α-approximate pure Nash equilibrium,
    i.e. no buyer can reach more than α times its current utility, and
    whether it satisfies weak no-overbidding (the bids on the won items do
    not exceed their value). Also determines the conservativeness level.

    :param inst: the instance
    :param profile: the bids
    :param alpha: the approximation factor to check
    :param tol: comparison tolerance, defaults to the configured one
    :raises ScaleGuardError: if N exceeds the exhaustive limit
    :return: the verification report
    """
    tol = config.tolerance if tol is None else tol
    agent_sets.require_exhaustive(inst.num_agents, "equilibrium check")
    outcome = evaluate(inst, profile, tol)
    buyers = []
    for k in range(inst.num_projects):
        best, items = best_response_value(inst, profile, k, tol)
        current = float(outcome.utilities[k])
        buyers.append(
            BuyerReport(k, current, best, safe_ratio(best, current, tol), agent_sets.members(items))
        )
    no_overbidding = all(
        profile.bids[k, agent_sets.members(s)].sum() <= inst.projects[k].value(s) + tol
        for k, s in enumerate(outcome.won)
    )
    report = EquilibriumReport(
        alpha=alpha,
        is_equilibrium=all(b.best_utility <= alpha * b.current_utility + tol for b in buyers),
        alpha_star=max(max(b.ratio, 1.0) for b in buyers),
        weak_no_overbidding=no_overbidding,
        gamma=conservativeness(inst, profile, tol),
        welfare=float(sum(v.value(s) for v, s in zip(inst.projects, outcome.won))),
        buyers=buyers,
    )
    logging.debug(f"Equilibrium check: {report.summary()}")
    return report


def bids_to_core(
    inst: Instance,
    profile: BidProfile,
    outcome: AuctionOutcome | None = None,
    tol: float | None = None,
) -> Solution:
    """
    Transforms an exact equilibrium with weak no-overbidding into a budget
    balanced core solution: every item is paid its highest bid, and the
    remaining value of each winning set is spread evenly over its items.

    :param inst: the instance
    :param profile: the bids
    :param outcome: the auction outcome, evaluated if not given
    :param tol: comparison tolerance, defaults to the configured one
    :raises NotAnEquilibriumError: if the profile is not an exact
                                   equilibrium with weak no-overbidding
    :return: the core solution
    """
    tol = config.tolerance if tol is None else tol
    report = verify_equilibrium(inst, profile, 1.0, tol)
    if not report.is_equilibrium or not report.weak_no_overbidding:
        raise NotAnEquilibriumError(f"Bids cannot be turned into a core solution: {report.summary()}")
    outcome = evaluate(inst, profile, tol) if outcome is None else outcome
    payments = profile.bids.max(axis=0)
    for v, s in zip(inst.projects, outcome.won):
        if s:
            members = agent_sets.members(s)
            deficit = v.value(s) - payments[members].sum()
            payments[members] += max(deficit, 0.0) / len(members)
    alloc = outcome.allocation()
    return Solution(alloc, payments, basic_metrics(inst, alloc, payments), "auction")


def uniform_winner_profile(inst: Instance, buyer: int, level: float) -> BidProfile:
    """
    Bid profile in which one buyer bids the same amount on every item and
    all other buyers bid nothing.
    """
    bids = np.zeros((inst.num_projects, inst.num_agents))
    bids[buyer] = level
    return BidProfile(bids)


@timing
def approx_ne_anonymous(inst: Instance, tol: float | None = None) -> ApproxEquilibrium:
    """
    Flips the envy-free anonymous core into bids, which form a
    2-approximate equilibrium with 4-conservative bids.

    :param inst: an instance with anonymous subadditive projects
    :param tol: comparison tolerance, defaults to the configured one
    :raises ValuationClassError: if a project is not anonymous and subadditive
    :return: the bids with their verification report
    """
    sol = anonymous_core(inst, envy_free=True, tol=tol)
    profile = flip_core_to_bids(sol)
    return ApproxEquilibrium(profile, verify_equilibrium(inst, profile, 2.0, tol), sol)


def smallest_increment(inst: Instance, tol: float | None = None) -> float:
    """
    Returns the smallest positive marginal value v_k(i | S) of any project,
    agent and set.
    """
    tol = config.tolerance if tol is None else tol
    n = inst.num_agents
    smallest = math.inf
    for v in inst.projects:
        for i in range(n):
            rest = agent_sets.disjoint_sets(1 << i, n)
            gains = v.table[rest | 1 << i] - v.table[rest]
            positive = gains[gains > tol]
            if len(positive):
                smallest = min(smallest, float(positive.min()))
    return smallest


def _ordered_prices(
    v: Valuation, ordering: list[int], prices: np.ndarray, epsilon: float
) -> None:
    # (1 + ε) times the marginal of each item along the buyer's ordering
    before = 0
    for i in ordering:
        prices[i] = (1 + epsilon) * v.marginal(i, before)
        before |= 1 << i


@timing
def approx_ne_submodular(
    inst: Instance,
    epsilon: float | None = None,
    alloc: Allocation | None = None,
    tol: float | None = None,
) -> ApproxEquilibrium:
    """
    Item-moving dynamics for submodular buyers. Starting from the welfare
    optimum or a given full allocation, every buyer keeps an ordering of
    its items, and each item is priced at (1 + ε) times its marginal value
    along that ordering. While
    some item i has a buyer k with v_k(i | X_k) above its price, the
    lowest such item moves to the buyer with the largest marginal, is
    appended to its ordering and priced at (1 + ε)·v_k(i | X_k). The
    prices of the losing buyer are recomputed, and no price decreases.

    The final prices, bid by the owning buyers, are (1 + ε)-conservative
    and form a (1 + ε)-approximate equilibrium.

    :param inst: an instance with coverage or additive projects
    :param epsilon: the price increase factor, defaults to the configured one
    :param alloc: the start allocation; the brute force optimum by default,
                  from which no item ever moves
    :param tol: comparison tolerance, defaults to the configured one
    :raises ValuationClassError: if a project is not of a submodular kind
    :raises InstanceValidationError: if the start allocation leaves an item unassigned
    :raises InternalInvariantError: if the dynamics exceed their move bound
    :return: the bids, their verification report, the moves and the price history
    """
    tol = config.tolerance if tol is None else tol
    epsilon = config.epsilon if epsilon is None else epsilon
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive (got {epsilon})")
    for k, v in enumerate(inst.projects):
        if not v.submodular_kind:
            raise ValuationClassError(f"Project {k} of kind '{v.kind}' is not of a submodular kind")
    n, m = inst.num_agents, inst.num_projects
    if alloc is None:
        alloc, _ = brute_force_opt(inst, tol)
    elif not alloc.is_full():
        raise InstanceValidationError("Every item needs an owner in the start allocation")
    orderings = [agent_sets.members(s) for s in alloc.sets]
    owners = alloc.assignment()
    prices = np.zeros(n)
    for k, v in enumerate(inst.projects):
        _ordered_prices(v, orderings[k], prices, epsilon)

    v_max = float(max(v.singleton_values().max() for v in inst.projects))
    delta = smallest_increment(inst, tol)
    if v_max > tol and math.isfinite(delta):
        guard = n * math.ceil(math.log(v_max / delta) / math.log(1 + epsilon)) + n
    else:
        guard = n

    history = [prices.tolist()]
    moves: list[dict[str, Any]] = []
    while True:
        sets = [agent_sets.mask_of(o) for o in orderings]
        move = None
        for i in range(n):
            gains = np.array(
                [
                    -np.inf if k == owners[i] else v.marginal(i, sets[k])
                    for k, v in enumerate(inst.projects)
                ]
            )
            if gains.max() > prices[i] + tol:
                move = (i, int(np.argmax(gains)), float(gains.max()))
                break
        if move is None:
            break
        i, k, gain = move
        source = owners[i]
        assert source is not None
        orderings[source].remove(i)
        orderings[k].append(i)
        owners[i] = k
        _ordered_prices(inst.projects[source], orderings[source], prices, epsilon)
        prices[i] = (1 + epsilon) * gain
        moves.append({"item": i, "source": source, "target": k, "price": float(prices[i])})
        history.append(prices.tolist())
        if len(moves) > guard:
            raise InternalInvariantError(
                f"Item moving dynamics exceeded their bound of {guard} moves"
            )

    final = Allocation(tuple(agent_sets.mask_of(o) for o in orderings), n)
    bids = np.zeros((m, n))
    for k, o in enumerate(orderings):
        bids[k, o] = prices[o]
    profile = BidProfile(bids)
    sol = Solution(final, prices.copy(), basic_metrics(inst, final, prices), "auction-submodular")
    sol.metrics.extra.update({"iterations": len(moves), "move_bound": guard})  # type: ignore[union-attr]
    report = verify_equilibrium(inst, profile, 1 + epsilon, tol)
    logging.info(f"Item moving dynamics made {len(moves)} move(s): {report.summary()}")
    return ApproxEquilibrium(profile, report, sol, moves, history)
