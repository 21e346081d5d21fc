"""
Instance generators: the fixed lower bound fixtures and seeded random
instance families. All randomness comes from numpy's default generator,
so identical generator specs produce identical instances.
"""

from dataclasses import dataclass, field
from enum import StrEnum
import logging
import math
from typing import Any, Callable

from dataclasses_json import dataclass_json
import numpy as np

from coalitioncore import agent_sets
from coalitioncore.model import Instance
from coalitioncore.utils import InstanceValidationError, InternalInvariantError
from coalitioncore.valuations import (
    AnonymousValuation,
    CoverageValuation,
    ExplicitValuation,
    Valuation,
    ValuationClass,
    XosValuation,
    check_class,
)

#: identifier of the bit generator behind numpy.random.default_rng
RNG_ALGORITHM = "numpy.PCG64"

#: largest agent count for explicit random tables
MAX_EXPLICIT_AGENTS = 12


class Family(StrEnum):
    example1 = "example1"
    claim4_part1 = "claim4-part1"
    claim4_part2 = "claim4-part2"
    overbid_sqrt_n = "overbid-sqrtN"
    random_explicit_subadditive = "random-explicit-subadditive"
    random_anonymous = "random-anonymous"
    random_xos = "random-xos"
    random_coverage = "random-coverage"


@dataclass_json
@dataclass
class GeneratorSpec:
    """
    Parameters of a generated instance. The fixed fixtures only use the
    agent count (and epsilon for example1) and always have two projects.
    """

    family: Family
    agents: int = 4
    projects: int = 2
    seed: int = 0
    #: deviation bonus of the second project in example1
    epsilon: float = 0.1
    params: dict[str, Any] = field(default_factory=dict)

    @property
    def is_random(self) -> bool:
        return self.family.startswith("random")

    def name(self) -> str:
        if self.family == Family.example1:
            return "example1"
        if not self.is_random:
            return f"{self.family}-n{self.agents}"
        return f"{self.family}-n{self.agents}-m{self.projects}-s{self.seed}"


def split_profile(num_agents: int, proper: float, full: float) -> list[float]:
    """Anonymous profile with one value on proper subsets and one on the full set"""
    return [0.0] + [proper] * (num_agents - 1) + [full]


def constant_profile(num_agents: int, value: float) -> list[float]:
    return [0.0] + [value] * num_agents


def _example1(spec: GeneratorSpec, rng: np.random.Generator) -> list[Valuation]:
    if spec.agents != 4:
        raise InstanceValidationError("example1 has exactly 4 agents")
    if not 0 < spec.epsilon < 1:
        raise InstanceValidationError(f"example1 needs 0 < epsilon < 1 (got {spec.epsilon})")
    table = np.full(16, 2.0)
    table[0], table[15] = 0.0, 4.0
    return [
        ExplicitValuation(4, table),
        AnonymousValuation(4, constant_profile(4, 1 + spec.epsilon)),
    ]


def _claim4_part1(spec: GeneratorSpec, rng: np.random.Generator) -> list[Valuation]:
    n = spec.agents
    if n < 4 or n % 2:
        raise InstanceValidationError(f"claim4-part1 needs an even N >= 4 (got {n})")
    return [
        AnonymousValuation(n, split_profile(n, n / 2, n)),
        AnonymousValuation(n, constant_profile(n, 2.0)),
    ]


def _claim4_part2(spec: GeneratorSpec, rng: np.random.Generator) -> list[Valuation]:
    n = spec.agents
    if n < 4 or n % 2:
        raise InstanceValidationError(f"{spec.family} needs an even N >= 4 (got {n})")
    return [
        AnonymousValuation(n, split_profile(n, n / 2, n)),
        AnonymousValuation(n, constant_profile(n, math.sqrt(n))),
    ]


def superset_minimum(weights: np.ndarray, num_agents: int) -> np.ndarray:
    """
    Returns w'(S) = min over T ⊇ S of w(T), the largest monotone function
    below w.
    """
    result = weights.copy()
    masks = agent_sets.all_masks(num_agents)
    for i in range(num_agents):
        without = masks[(masks >> i & 1) == 0]
        result[without] = np.minimum(result[without], result[without | 1 << i])
    return result


def cover_closure(costs: np.ndarray, num_agents: int) -> np.ndarray:
    """
    Returns c(S) = min(w(S), min over partitions {T, S \\ T} of c(T) + c(S \\ T)),
    the largest subadditive function below w. Monotone inputs stay monotone.
    """
    closed = costs.copy()
    for s in range(1, 1 << num_agents):
        lowest = s & -s
        rest = s & ~lowest
        # split off the part containing the lowest member
        t = rest
        while True:
            part = t | lowest
            if part != s:
                closed[s] = min(closed[s], closed[part] + closed[s & ~part])
            if t == 0:
                break
            t = (t - 1) & rest
    return closed


def _random_explicit_subadditive(
    spec: GeneratorSpec, rng: np.random.Generator
) -> list[Valuation]:
    n = spec.agents
    if n > MAX_EXPLICIT_AGENTS:
        raise InstanceValidationError(
            f"Explicit random tables support at most {MAX_EXPLICIT_AGENTS} agents (got {n})"
        )
    result: list[Valuation] = []
    for _ in range(spec.projects):
        sizes = agent_sets.set_sizes(n)
        weights = np.round(rng.uniform(0.5, 1.5, 1 << n) * (1 + sizes) ** 0.75, 2)
        weights[0] = 0.0
        table = cover_closure(superset_minimum(weights, n), n)
        v = ExplicitValuation(n, table)
        for cls in (ValuationClass.monotone, ValuationClass.subadditive):
            if not check_class(v, cls):
                raise InternalInvariantError(f"Generated table is not {cls}")
        result.append(v)
    return result


def _random_anonymous(spec: GeneratorSpec, rng: np.random.Generator) -> list[Valuation]:
    n = spec.agents
    result: list[Valuation] = []
    for _ in range(spec.projects):
        steps = np.round(rng.uniform(0, 2, n), 2)
        steps[rng.random(n) < 0.2] = 0.0
        profile = np.concatenate([[0.0], np.cumsum(steps)])
        closed = profile.copy()
        for t in range(2, n + 1):
            closed[t] = min([closed[t]] + [closed[s] + closed[t - s] for s in range(1, t)])
        result.append(AnonymousValuation(n, closed))
    return result


def _random_xos(spec: GeneratorSpec, rng: np.random.Generator) -> list[Valuation]:
    n = spec.agents
    max_clauses = int(spec.params.get("max_clauses", 4))
    result: list[Valuation] = []
    for _ in range(spec.projects):
        count = int(rng.integers(1, max_clauses + 1))
        clauses = np.round(rng.uniform(0, 3, (count, n)), 2)
        clauses[rng.random((count, n)) < 0.3] = 0.0
        result.append(XosValuation(n, clauses))
    return result


def _random_coverage(spec: GeneratorSpec, rng: np.random.Generator) -> list[Valuation]:
    n = spec.agents
    universe = int(spec.params.get("universe", 2 * n))
    result: list[Valuation] = []
    for _ in range(spec.projects):
        sets = []
        for _ in range(n):
            count = min(int(rng.integers(1, 4)), universe)
            sets.append(sorted(int(e) for e in rng.choice(universe, count, replace=False)))
        result.append(CoverageValuation(n, universe, sets))
    return result


_GENERATORS: dict[Family, Callable[[GeneratorSpec, np.random.Generator], list[Valuation]]] = {
    Family.example1: _example1,
    Family.claim4_part1: _claim4_part1,
    Family.claim4_part2: _claim4_part2,
    Family.overbid_sqrt_n: _claim4_part2,
    Family.random_explicit_subadditive: _random_explicit_subadditive,
    Family.random_anonymous: _random_anonymous,
    Family.random_xos: _random_xos,
    Family.random_coverage: _random_coverage,
}


def generate(spec: GeneratorSpec) -> Instance:
    """
    Generates an instance.

    :param spec: family and parameters of the instance
    :raises InstanceValidationError: for parameters outside the family's range
    :return: the validated instance
    """
    family = Family(spec.family)
    if spec.agents < 1 or spec.agents > agent_sets.MAX_AGENTS:
        raise InstanceValidationError(
            f"agents must be in 1..{agent_sets.MAX_AGENTS} (got {spec.agents})"
        )
    if spec.projects < 1:
        raise InstanceValidationError(f"projects must be at least 1 (got {spec.projects})")
    rng = np.random.default_rng(spec.seed)
    projects = _GENERATORS[family](spec, rng)
    inst = Instance(spec.agents, tuple(projects), spec.name())
    inst.validate()
    logging.debug(f"Generated instance {inst}")
    return inst
