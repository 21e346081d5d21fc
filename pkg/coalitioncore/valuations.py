"""
Defines the project valuation functions of all supported kinds and their
oracle operations: value and marginal queries, demand queries, XoS clause
queries, and exhaustive checks for membership in the valuation classes.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import StrEnum
from functools import cached_property
import logging
from typing import Any, ClassVar, Sequence

import numpy as np
from scipy.optimize import linprog  # type: ignore

from coalitioncore import agent_sets
from coalitioncore.agent_sets import AgentSet
from coalitioncore.config import config
from coalitioncore.utils import InstanceValidationError, ValuationClassError


class ValuationKind(StrEnum):
    """
    Specifies how a valuation function is represented
    """

    explicit = "explicit"
    anonymous = "anonymous"
    additive = "additive"
    xos = "xos"
    coverage = "coverage"


class ValuationClass(StrEnum):
    """
    The valuation classes that can be checked exhaustively
    """

    monotone = "monotone"
    subadditive = "subadditive"
    submodular = "submodular"
    xos = "xos-consistency"
    anonymous = "anonymous"


@dataclass(frozen=True)
class XosClauseResult:
    """
    An additive clause that is maximal at the queried set: its value at
    the queried set equals the valuation, and it is dominated by the
    valuation on every subset.
    """

    #: index of the maximizing clause; None if the clause was synthesized
    clause_index: int | None
    #: additive weight of each agent
    weights: tuple[float, ...]

    def value(self, mask: AgentSet) -> float:
        return float(sum(self.weights[i] for i in agent_sets.members(mask)))


@dataclass(frozen=True)
class ClassCheckResult:
    """
    Result of a class membership check. On failure, the witness contains
    the violating sets (and agent, where applicable).
    """

    holds: bool
    witness: tuple[int, ...] | None = None

    def __bool__(self) -> bool:
        return self.holds


class Valuation(ABC):
    """
    Monotone set function of a single project, defined on the agent sets
    of N agents. Valuations are immutable after construction.
    """

    kind: ClassVar[ValuationKind]
    #: whether every valuation of this kind is submodular
    submodular_kind: ClassVar[bool] = False

    def __init__(self, num_agents: int) -> None:
        if not 1 <= num_agents <= agent_sets.MAX_AGENTS:
            raise InstanceValidationError(
                f"agents: N must be in 1..{agent_sets.MAX_AGENTS} (got {num_agents})"
            )
        self.num_agents = num_agents

    @abstractmethod
    def value(self, mask: AgentSet) -> float:
        """
        Returns the value of an agent set.

        :param mask: the agent set
        :return: the value v(S)
        """

    @abstractmethod
    def to_dict(self) -> dict[str, Any]:
        """Returns the JSON representation used in instance files"""

    def _compute_table(self) -> np.ndarray:
        return np.array([self.value(int(m)) for m in agent_sets.all_masks(self.num_agents)])

    @cached_property
    def table(self) -> np.ndarray:
        """
        The values of all 2^N agent sets, in bitmask order. Only available
        for agent counts within the exhaustive limit.
        """
        agent_sets.require_exhaustive(self.num_agents, "value table")
        values = np.asarray(self._compute_table(), dtype=float)
        values.setflags(write=False)
        return values

    def marginal(self, agent: int, mask: AgentSet) -> float:
        """
        Returns the marginal value v({i} | S) = v(S ∪ {i}) - v(S).

        :param agent: the agent i
        :param mask: the set S; must not contain i
        :raises ValueError: if the agent is already contained in the set
        :return: the marginal value
        """
        if agent_sets.contains(mask, agent):
            raise ValueError(f"Agent {agent} is already contained in set {mask}")
        return self.value(mask | 1 << agent) - self.value(mask)

    def singleton_values(self) -> np.ndarray:
        """
        Returns v({i}) for every agent i.
        """
        return np.array([self.value(1 << i) for i in range(self.num_agents)])

    def demand(
        self,
        prices: Sequence[float] | np.ndarray,
        base: AgentSet = 0,
        tol: float | None = None,
    ) -> AgentSet:
        """
        Demand oracle: returns a set T maximizing v(base ∪ T) - v(base) - p(T)
        over all T disjoint from base. With the default empty base, this is the
        plain surplus v(T) - p(T). Ties are broken by the smallest bitmask.

        :param prices: one nonnegative price per agent
        :param base: agents already on the project; their marginal valuation is
                     used, and they cannot be demanded again
        :param tol: comparison tolerance, defaults to the configured one
        :return: the demanded set
        """
        tol = config.tolerance if tol is None else tol
        prices = np.asarray(prices, dtype=float)
        assert len(prices) == self.num_agents, "Need one price per agent"
        assert (prices >= -tol).all(), "Prices must be nonnegative"
        shortcut = self._demand_shortcut(prices, base, tol)
        if shortcut is not None:
            return shortcut
        agent_sets.require_exhaustive(self.num_agents, "demand query")
        candidates = agent_sets.disjoint_sets(base, self.num_agents)
        surplus = (
            self.table[candidates | base]
            - self.table[base]
            - agent_sets.set_payments(prices)[candidates]
        )
        best = surplus.max()
        return int(candidates[np.flatnonzero(surplus >= best - tol)[0]])

    def _demand_shortcut(
        self, prices: np.ndarray, base: AgentSet, tol: float
    ) -> AgentSet | None:
        return None

    def surplus(self, mask: AgentSet, prices: Sequence[float] | np.ndarray) -> float:
        return self.value(mask) - sum(prices[i] for i in agent_sets.members(mask))

    def xos_clause(self, mask: AgentSet) -> XosClauseResult:
        """
        XoS oracle: returns an additive clause that equals the valuation at the
        given set and is dominated by it on all subsets.

        :param mask: a nonempty agent set
        :raises ValuationClassError: if this kind has no clause structure
        :return: the clause
        """
        raise ValuationClassError(
            f"Valuations of kind '{self.kind}' do not provide XoS clauses"
        )

    def has_clause_oracle(self) -> bool:
        return type(self).xos_clause is not Valuation.xos_clause

    def validate(self, tol: float | None = None, field: str = "valuation") -> None:
        """
        Checks normalization v(∅) = 0 and monotonicity.

        :param tol: comparison tolerance, defaults to the configured one
        :param field: field path used in error messages
        :raises InstanceValidationError: if an invariant is violated
        """
        tol = config.tolerance if tol is None else tol
        empty = self.value(0)
        if abs(empty) > tol:
            raise InstanceValidationError(
                f"{field}: valuation is not normalized, v(∅) = {empty} instead of 0"
            )
        self._check_monotone(tol, field)

    def _check_monotone(self, tol: float, field: str) -> None:
        if self.num_agents > config.max_exhaustive_agents:
            logging.warning(
                f"{field}: monotonicity of {self.num_agents} agents is not checked "
                f"(limit {config.max_exhaustive_agents})"
            )
            return
        result = check_class(self, ValuationClass.monotone, tol)
        if not result:
            assert result.witness is not None
            small, large = result.witness
            raise InstanceValidationError(
                f"{field}: valuation is not monotone, v({agent_sets.members(small)}) = "
                f"{self.value(small)} > v({agent_sets.members(large)}) = {self.value(large)}"
            )

    @staticmethod
    def from_dict(
        data: dict[str, Any], num_agents: int, field: str = "valuation"
    ) -> "Valuation":
        """
        Creates a valuation from its JSON representation.

        :param data: the parsed JSON object
        :param num_agents: the number of agents N of the instance
        :param field: field path used in error messages
        :raises InstanceValidationError: for schema violations
        :return: the valuation object
        """
        if not isinstance(data, dict) or "kind" not in data:
            raise InstanceValidationError(f"{field}: missing 'kind'")
        try:
            kind = ValuationKind(data["kind"])
        except ValueError:
            raise InstanceValidationError(
                f"{field}.kind: unknown valuation kind '{data['kind']}'"
            )
        parser = _PARSERS[kind]
        try:
            return parser(data, num_agents, field)
        except (KeyError, TypeError, ValueError) as e:
            raise InstanceValidationError(f"{field}: invalid {kind} valuation: {e}")


class ExplicitValuation(Valuation):
    """
    Valuation given as a full table of 2^N values
    """

    kind = ValuationKind.explicit

    def __init__(self, num_agents: int, values: Sequence[float] | np.ndarray) -> None:
        super().__init__(num_agents)
        values = np.array(values, dtype=float)
        if values.shape != (1 << num_agents,):
            raise InstanceValidationError(
                f"values: an explicit table needs {1 << num_agents} entries "
                f"(got {values.shape})"
            )
        values.setflags(write=False)
        self._values = values

    def value(self, mask: AgentSet) -> float:
        return float(self._values[mask])

    def _compute_table(self) -> np.ndarray:
        return self._values

    @cached_property
    def table(self) -> np.ndarray:
        return self._values

    def to_dict(self) -> dict[str, Any]:
        values = {str(m): float(v) for m, v in enumerate(self._values) if m}
        return {"kind": str(self.kind), "values": values}


class AnonymousValuation(Valuation):
    """
    Valuation that only depends on the coalition size, given as a profile
    of N+1 values indexed by size.
    """

    kind = ValuationKind.anonymous

    def __init__(self, num_agents: int, values: Sequence[float] | np.ndarray) -> None:
        super().__init__(num_agents)
        profile = np.array(values, dtype=float)
        if profile.shape != (num_agents + 1,):
            raise InstanceValidationError(
                f"values: an anonymous profile needs N+1 = {num_agents + 1} entries "
                f"(got {profile.shape})"
            )
        profile.setflags(write=False)
        self.profile = profile

    def value(self, mask: AgentSet) -> float:
        return float(self.profile[agent_sets.size(mask)])

    def value_of_size(self, count: int) -> float:
        return float(self.profile[count])

    def _compute_table(self) -> np.ndarray:
        return self.profile[agent_sets.set_sizes(self.num_agents)]

    def _check_monotone(self, tol: float, field: str) -> None:
        steps = np.diff(self.profile)
        if (steps < -tol).any():
            s = int(np.flatnonzero(steps < -tol)[0])
            raise InstanceValidationError(
                f"{field}: anonymous profile is not non-decreasing, "
                f"v({s}) = {self.profile[s]} > v({s + 1}) = {self.profile[s + 1]}"
            )

    def is_subadditive_profile(self, tol: float | None = None) -> ClassCheckResult:
        """
        Checks v(s) + v(t) >= v(s + t) for all sizes with s + t <= N.

        :param tol: comparison tolerance, defaults to the configured one
        :return: the check result; the witness contains the sizes (s, t)
        """
        tol = config.tolerance if tol is None else tol
        v = self.profile
        for s in range(1, self.num_agents + 1):
            for t in range(s, self.num_agents - s + 1):
                if v[s + t] > v[s] + v[t] + tol:
                    return ClassCheckResult(False, (s, t))
        return ClassCheckResult(True)

    def halving_property_holds(self, tol: float | None = None) -> bool:
        """
        Checks v(t) >= v(s)/2 whenever t >= s/2, which every anonymous
        subadditive profile satisfies.
        """
        tol = config.tolerance if tol is None else tol
        v = self.profile
        return all(
            2 * v[t] >= v[s] - tol
            for s in range(self.num_agents + 1)
            for t in range(self.num_agents + 1)
            if 2 * t >= s
        )

    def to_dict(self) -> dict[str, Any]:
        return {"kind": str(self.kind), "values": [float(v) for v in self.profile]}


class AdditiveValuation(Valuation):
    """
    Additive valuation with one nonnegative weight per agent
    """

    kind = ValuationKind.additive
    submodular_kind = True

    def __init__(self, num_agents: int, weights: Sequence[float] | np.ndarray) -> None:
        super().__init__(num_agents)
        w = np.array(weights, dtype=float)
        if w.shape != (num_agents,):
            raise InstanceValidationError(
                f"weights: need one weight per agent (got {w.shape})"
            )
        w.setflags(write=False)
        self.weights = w

    def value(self, mask: AgentSet) -> float:
        return float(sum(self.weights[i] for i in agent_sets.members(mask)))

    def _compute_table(self) -> np.ndarray:
        return agent_sets.set_payments(self.weights)

    def _check_monotone(self, tol: float, field: str) -> None:
        if (self.weights < -tol).any():
            i = int(np.flatnonzero(self.weights < -tol)[0])
            raise InstanceValidationError(
                f"{field}: additive weight of agent {i} is negative ({self.weights[i]})"
            )

    def _demand_shortcut(
        self, prices: np.ndarray, base: AgentSet, tol: float
    ) -> AgentSet | None:
        # each agent is demanded independently of all others
        profitable = np.flatnonzero(self.weights - prices > tol)
        return agent_sets.mask_of(i for i in profitable if not agent_sets.contains(base, i))

    def xos_clause(self, mask: AgentSet) -> XosClauseResult:
        return XosClauseResult(0, tuple(float(w) for w in self.weights))

    def to_dict(self) -> dict[str, Any]:
        return {"kind": str(self.kind), "weights": [float(w) for w in self.weights]}


class XosValuation(Valuation):
    """
    Fractionally subadditive valuation: the pointwise maximum of a list of
    nonnegative additive clauses.
    """

    kind = ValuationKind.xos

    def __init__(self, num_agents: int, clauses: Sequence[Sequence[float]] | np.ndarray) -> None:
        super().__init__(num_agents)
        c = np.array(clauses, dtype=float)
        if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] != num_agents:
            raise InstanceValidationError(
                f"clauses: need at least one clause with N = {num_agents} weights "
                f"(got shape {c.shape})"
            )
        c.setflags(write=False)
        self.clauses = c

    def clause_values(self, mask: AgentSet) -> np.ndarray:
        return self.clauses[:, agent_sets.members(mask)].sum(axis=1)

    def value(self, mask: AgentSet) -> float:
        return float(self.clause_values(mask).max())

    def _compute_table(self) -> np.ndarray:
        bits = agent_sets.membership_matrix(self.num_agents)
        return (bits @ self.clauses.T).max(axis=1)

    def _check_monotone(self, tol: float, field: str) -> None:
        if (self.clauses < -tol).any():
            j, i = np.argwhere(self.clauses < -tol)[0]
            raise InstanceValidationError(
                f"{field}: clause {j} has a negative weight for agent {i}"
            )

    def _demand_shortcut(
        self, prices: np.ndarray, base: AgentSet, tol: float
    ) -> AgentSet | None:
        if base or self.num_agents <= config.max_exhaustive_agents:
            return None
        # the best set of the best clause is an optimal demand
        gains = np.where(self.clauses - prices > tol, self.clauses - prices, 0.0)
        best_clause = int(np.argmax(gains.sum(axis=1)))
        return agent_sets.mask_of(np.flatnonzero(gains[best_clause] > 0))

    def xos_clause(self, mask: AgentSet) -> XosClauseResult:
        assert mask, "XoS clauses are queried for nonempty sets"
        index = int(np.argmax(self.clause_values(mask)))
        return XosClauseResult(index, tuple(float(w) for w in self.clauses[index]))

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": str(self.kind),
            "clauses": [[float(w) for w in clause] for clause in self.clauses],
        }


class CoverageValuation(Valuation):
    """
    Coverage function: every agent covers a subset of a universe of
    elements, and a coalition is worth the number of elements covered by
    at least one member. Coverage functions are submodular.
    """

    kind = ValuationKind.coverage
    submodular_kind = True

    def __init__(self, num_agents: int, universe: int, sets: Sequence[Sequence[int]]) -> None:
        super().__init__(num_agents)
        if universe < 0:
            raise InstanceValidationError(f"universe: must be nonnegative (got {universe})")
        if len(sets) != num_agents:
            raise InstanceValidationError(
                f"sets: need one covered set per agent (got {len(sets)})"
            )
        for i, covered in enumerate(sets):
            for e in covered:
                if not 0 <= e < universe:
                    raise InstanceValidationError(
                        f"sets[{i}]: element {e} outside universe 0..{universe - 1}"
                    )
        self.universe = universe
        self.sets = tuple(tuple(sorted(set(int(e) for e in s))) for s in sets)
        self._covers = [sum(1 << e for e in s) for s in self.sets]

    def covered(self, mask: AgentSet) -> int:
        elements = 0
        for i in agent_sets.members(mask):
            elements |= self._covers[i]
        return elements

    def value(self, mask: AgentSet) -> float:
        return float(self.covered(mask).bit_count())

    def _compute_table(self) -> np.ndarray:
        masks = agent_sets.all_masks(self.num_agents)
        covered = [0] * len(masks)
        for m in range(1, len(masks)):
            low = m & -m
            covered[m] = covered[m ^ low] | self._covers[low.bit_length() - 1]
        return np.array([c.bit_count() for c in covered], dtype=float)

    def _check_monotone(self, tol: float, field: str) -> None:
        pass

    def xos_clause(self, mask: AgentSet) -> XosClauseResult:
        # marginals in index order yield a clause that is tight at mask
        weights = [0.0] * self.num_agents
        prefix = 0
        for i in agent_sets.members(mask):
            weights[i] = self.marginal(i, prefix)
            prefix |= 1 << i
        return XosClauseResult(None, tuple(weights))

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": str(self.kind),
            "universe": self.universe,
            "sets": [list(s) for s in self.sets],
        }


def _parse_explicit(data: dict, num_agents: int, field: str) -> Valuation:
    raw = data["values"]
    if not isinstance(raw, dict):
        raise InstanceValidationError(f"{field}.values: expected an object keyed by bitmask")
    table = np.full(1 << num_agents, np.nan)
    table[0] = 0.0
    for key, val in raw.items():
        mask = int(key)
        agent_sets.check_mask(mask, num_agents, f"{field}.values['{key}']")
        table[mask] = float(val)
    if np.isnan(table).any():
        missing = int(np.flatnonzero(np.isnan(table))[0])
        raise InstanceValidationError(f"{field}.values: missing entry for set '{missing}'")
    return ExplicitValuation(num_agents, table)


def _parse_anonymous(data: dict, num_agents: int, field: str) -> Valuation:
    return AnonymousValuation(num_agents, data["values"])


def _parse_additive(data: dict, num_agents: int, field: str) -> Valuation:
    return AdditiveValuation(num_agents, data["weights"])


def _parse_xos(data: dict, num_agents: int, field: str) -> Valuation:
    return XosValuation(num_agents, data["clauses"])


def _parse_coverage(data: dict, num_agents: int, field: str) -> Valuation:
    return CoverageValuation(num_agents, int(data["universe"]), data["sets"])


_PARSERS = {
    ValuationKind.explicit: _parse_explicit,
    ValuationKind.anonymous: _parse_anonymous,
    ValuationKind.additive: _parse_additive,
    ValuationKind.xos: _parse_xos,
    ValuationKind.coverage: _parse_coverage,
}


def value(v: Valuation, mask: AgentSet) -> float:
    return v.value(mask)


def marginal(v: Valuation, agent: int, mask: AgentSet) -> float:
    return v.marginal(agent, mask)


def demand_query(
    v: Valuation, prices: Sequence[float] | np.ndarray, base: AgentSet = 0
) -> AgentSet:
    return v.demand(prices, base)


def xos_clause_query(v: Valuation, mask: AgentSet) -> XosClauseResult:
    return v.xos_clause(mask)


def check_class(
    v: Valuation, valuation_class: ValuationClass | str, tol: float | None = None
) -> ClassCheckResult:
    """
    Checks exhaustively whether a valuation belongs to a class. On failure,
    a violating witness is returned:

    - monotone: (S, S ∪ {i}) with v(S) > v(S ∪ {i})
    - subadditive: disjoint (S, T) with v(S ∪ T) > v(S) + v(T)
    - submodular: (S, T, i) with S ⊆ T and v({i} | S) < v({i} | T)
    - xos-consistency: (S,) for which no dominated additive clause is tight
    - anonymous: (S, T) with |S| = |T| and v(S) != v(T)

    Subadditivity is checked for disjoint pairs, which is equivalent for
    monotone valuations.

    :param v: the valuation
    :param valuation_class: the class to check
    :param tol: comparison tolerance, defaults to the configured one
    :return: the check result
    """
    tol = config.tolerance if tol is None else tol
    valuation_class = ValuationClass(valuation_class)
    agent_sets.require_exhaustive(v.num_agents, f"{valuation_class} check")
    checks = {
        ValuationClass.monotone: _scan_monotone,
        ValuationClass.subadditive: _scan_subadditive,
        ValuationClass.submodular: _scan_submodular,
        ValuationClass.xos: _scan_xos,
        ValuationClass.anonymous: _scan_anonymous,
    }
    result = checks[valuation_class](v, tol)
    if not result:
        logging.debug(f"Valuation failed the {valuation_class} check: {result.witness}")
    return result


def _scan_monotone(v: Valuation, tol: float) -> ClassCheckResult:
    n = v.num_agents
    table = v.table
    for i in range(n):
        without = agent_sets.disjoint_sets(1 << i, n)
        drops = table[without] > table[without | 1 << i] + tol
        if drops.any():
            s = int(without[np.flatnonzero(drops)[0]])
            return ClassCheckResult(False, (s, s | 1 << i))
    return ClassCheckResult(True)


def _scan_subadditive(v: Valuation, tol: float) -> ClassCheckResult:
    n = v.num_agents
    table = v.table
    for s in range(1, 1 << n):
        others = agent_sets.disjoint_sets(s, n)[1:]
        excess = table[others | s] > table[s] + table[others] + tol
        if excess.any():
            return ClassCheckResult(False, (s, int(others[np.flatnonzero(excess)[0]])))
    return ClassCheckResult(True)


def _scan_submodular(v: Valuation, tol: float) -> ClassCheckResult:
    # local form: v(S+i) - v(S) >= v(S+i+j) - v(S+j) for all S and i, j not in S
    n = v.num_agents
    table = v.table
    for i in range(n):
        for j in range(i + 1, n):
            rest = agent_sets.disjoint_sets(1 << i | 1 << j, n)
            gain_small = table[rest | 1 << i] - table[rest]
            gain_large = table[rest | 1 << i | 1 << j] - table[rest | 1 << j]
            violated = gain_small < gain_large - tol
            if violated.any():
                s = int(rest[np.flatnonzero(violated)[0]])
                return ClassCheckResult(False, (s, s | 1 << j, i))
    return ClassCheckResult(True)


def _scan_anonymous(v: Valuation, tol: float) -> ClassCheckResult:
    sizes = agent_sets.set_sizes(v.num_agents)
    masks = agent_sets.all_masks(v.num_agents)
    table = v.table
    for count in range(v.num_agents + 1):
        same_size = masks[sizes == count]
        values = table[same_size]
        if values.max() - values.min() > tol:
            return ClassCheckResult(
                False,
                (int(same_size[np.argmin(values)]), int(same_size[np.argmax(values)])),
            )
    return ClassCheckResult(True)


def _scan_xos(v: Valuation, tol: float) -> ClassCheckResult:
    n = v.num_agents
    table = v.table
    bits = agent_sets.membership_matrix(n)
    for s in range(1, 1 << n):
        if v.has_clause_oracle():
            weights = np.array(v.xos_clause(s).weights)
            subsets = agent_sets.submasks(s, n)
            clause_values = bits[subsets] @ weights
            tight = abs(clause_values[-1] - table[s]) <= tol
            if not tight or (clause_values > table[subsets] + tol).any():
                return ClassCheckResult(False, (s,))
        elif not _dominated_clause_exists(table, s, n, tol):
            return ClassCheckResult(False, (s,))
    return ClassCheckResult(True)


def _dominated_clause_exists(table: np.ndarray, mask: AgentSet, n: int, tol: float) -> bool:
    """
    Solves the feasibility LP for a nonnegative additive clause a on the
    members of mask with a(mask) = v(mask) and a(T) <= v(T) for all T ⊂ mask.
    """
    agents = agent_sets.members(mask)
    subsets = agent_sets.submasks(mask, n)[1:-1]
    bits = agent_sets.membership_matrix(n)[:, agents]
    result = linprog(
        c=np.zeros(len(agents)),
        A_ub=bits[subsets] if len(subsets) else None,
        b_ub=table[subsets] + tol if len(subsets) else None,
        A_eq=np.ones((1, len(agents))),
        b_eq=[table[mask]],
        bounds=[(0, None)] * len(agents),
        method="highs",
    )
    return bool(result.status == 0)
