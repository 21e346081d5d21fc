import numpy as np
import pytest

from coalitioncore import agent_sets
from coalitioncore.utils import InstanceValidationError, ScaleGuardError


def test_mask_helpers():
    mask = agent_sets.mask_of([0, 2, 3])
    assert mask == 0b1101
    assert agent_sets.members(mask) == [0, 2, 3]
    assert agent_sets.size(mask) == 3
    assert agent_sets.contains(mask, 2) and not agent_sets.contains(mask, 1)
    assert agent_sets.full_mask(4) == 15
    assert agent_sets.lowest_members(mask, 2) == [0, 2]


def test_check_mask_rejects_outside_agents():
    agent_sets.check_mask(7, 3)
    with pytest.raises(InstanceValidationError):
        agent_sets.check_mask(8, 3)
    with pytest.raises(InstanceValidationError):
        agent_sets.check_mask(-1, 3)


def test_exhaustive_guard():
    agent_sets.require_exhaustive(16, "test")
    with pytest.raises(ScaleGuardError):
        agent_sets.require_exhaustive(17, "test")


def test_set_tables():
    """
    Tests the cached tables that all exhaustive scans are built on
    """
    assert list(agent_sets.all_masks(2)) == [0, 1, 2, 3]
    bits = agent_sets.membership_matrix(3)
    assert bits.shape == (8, 3)
    assert list(bits[5]) == [1.0, 0.0, 1.0], "Wrong membership row of set {0, 2}"
    assert list(agent_sets.set_sizes(3)) == [0, 1, 1, 2, 1, 2, 2, 3]
    totals = agent_sets.set_payments(np.array([1.0, 2.0, 4.0]))
    assert list(totals) == [0, 1, 2, 3, 4, 5, 6, 7]


def test_set_enumerations():
    assert list(agent_sets.supersets(0b101, 3)) == [5, 7]
    assert list(agent_sets.disjoint_sets(0b101, 3)) == [0, 2]
    assert list(agent_sets.submasks(0b110, 3)) == [0, 2, 4, 6]
