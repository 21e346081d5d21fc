"""
Shared instances for the unit and integration tests
"""

import numpy as np
import pytest

from coalitioncore.generators import Family, GeneratorSpec, generate
from coalitioncore.model import Instance, load_example1
from coalitioncore.valuations import (
    AdditiveValuation,
    AnonymousValuation,
    CoverageValuation,
    ExplicitValuation,
    XosValuation,
)


@pytest.fixture
def example1() -> Instance:
    return load_example1()


@pytest.fixture
def claim4_small() -> Instance:
    """Lower bound instance with N = 4: v1 = 2 on proper sets, 4 on all, v2 = 2"""
    return generate(GeneratorSpec(Family.claim4_part1, agents=4))


@pytest.fixture
def additive_pair() -> Instance:
    """Two agents, two additive projects with weights (3, 1) and (2, 2)"""
    return Instance(2, (AdditiveValuation(2, [3, 1]), AdditiveValuation(2, [2, 2])), "additive-pair")


@pytest.fixture
def coverage_pair() -> Instance:
    """
    Two agents that cover the same single element on each of two coverage
    projects. Putting both agents on one project wastes one of them.
    """
    return Instance(
        2,
        (CoverageValuation(2, 1, [[0], [0]]), CoverageValuation(2, 1, [[0], [0]])),
        "coverage-pair",
    )


@pytest.fixture
def xos_single() -> Instance:
    """One project with clauses (2, 0) and (0, 2)"""
    return Instance(2, (XosValuation(2, [[2, 0], [0, 2]]),), "xos-single")


@pytest.fixture
def bad_project_instance() -> Instance:
    """
    Three agents. Project 0 is worth 1 for one or two agents and 6 for all
    three, project 1 is worth 1.5 for any nonempty set.
    """
    table = np.array([0, 1, 1, 1, 1, 1, 1, 6], dtype=float)
    return Instance(
        3,
        (ExplicitValuation(3, table), AnonymousValuation(3, [0, 1.5, 1.5, 1.5])),
        "bad-project",
    )
