"""
Agent sets are stored as integer bitmasks over the agent indices 0..N-1.
This module contains the helpers for converting, enumerating and
validating them, including cached numpy tables of all subsets that the
exhaustive operations work on.
"""

import functools
from typing import Iterable

import numpy as np

from coalitioncore.config import config
from coalitioncore.utils import InstanceValidationError, ScaleGuardError

#: a set of agents, as bitmask (bit i set <=> agent i is a member)
AgentSet = int

#: largest supported number of agents
MAX_AGENTS = 24


def mask_of(agents: Iterable[int]) -> AgentSet:
    """
    Converts a collection of agent indices to a bitmask.

    :param agents: agent indices
    :return: the corresponding agent set
    """
    mask = 0
    for i in agents:
        mask |= 1 << int(i)
    return mask


def members(mask: AgentSet) -> list[int]:
    """
    Returns the agent indices contained in an agent set, in ascending order.

    :param mask: the agent set
    :return: sorted list of member indices
    """
    result = []
    i = 0
    while mask:
        if mask & 1:
            result.append(i)
        mask >>= 1
        i += 1
    return result


def size(mask: AgentSet) -> int:
    return mask.bit_count()


def full_mask(num_agents: int) -> AgentSet:
    return (1 << num_agents) - 1


def contains(mask: AgentSet, agent: int) -> bool:
    return bool(mask >> agent & 1)


def lowest_members(mask: AgentSet, count: int) -> list[int]:
    """
    Returns the count lowest-indexed members of an agent set.

    :param mask: the agent set
    :param count: the number of members to return
    :return: list of member indices
    """
    assert count <= size(mask), f"Set {mask} has fewer than {count} members"
    return members(mask)[:count]


def check_mask(mask: AgentSet, num_agents: int, field: str = "agent set") -> None:
    """
    Checks that an agent set only contains valid agent indices.

    :param mask: the agent set to check
    :param num_agents: the number of agents N
    :param field: name of the checked field, for error messages
    :raises InstanceValidationError: if a bit >= N is set
    """
    if mask < 0 or mask >> num_agents:
        raise InstanceValidationError(
            f"{field}: bitmask {mask} contains agents outside 0..{num_agents - 1}"
        )


def require_exhaustive(num_agents: int, operation: str) -> None:
    """
    Guard for operations that enumerate all 2^N subsets.

    :param num_agents: the number of agents N
    :param operation: name of the operation, for the error message
    :raises ScaleGuardError: if N exceeds the configured limit
    """
    limit = config.max_exhaustive_agents
    if num_agents > limit:
        raise ScaleGuardError(
            f"{operation} enumerates all 2^N agent sets and supports at most "
            f"{limit} agents (got N={num_agents})"
        )


@functools.cache
def all_masks(num_agents: int) -> np.ndarray:
    """
    Returns all agent sets for N agents in ascending bitmask order.
    The returned array must not be modified.
    """
    masks = np.arange(1 << num_agents, dtype=np.int64)
    masks.setflags(write=False)
    return masks


@functools.cache
def membership_matrix(num_agents: int) -> np.ndarray:
    """
    Returns a 0/1 matrix with one row per agent set (in bitmask order) and
    one column per agent. Multiplying it with a payment vector yields the
    total payment of every agent set at once. The returned array must not be
    modified.

    :param num_agents: the number of agents N
    :return: float matrix of shape (2^N, N)
    """
    masks = all_masks(num_agents)
    bits = ((masks[:, None] >> np.arange(num_agents)) & 1).astype(float)
    bits.setflags(write=False)
    return bits


@functools.cache
def set_sizes(num_agents: int) -> np.ndarray:
    """
    Returns the cardinality of every agent set, in bitmask order.
    """
    sizes = membership_matrix(num_agents).sum(axis=1).astype(np.int64)
    sizes.setflags(write=False)
    return sizes


def set_payments(payments: np.ndarray) -> np.ndarray:
    """
    Sums up a payment (or price, or bid) vector over every agent set.

    :param payments: one value per agent
    :return: array with the total for each agent set, in bitmask order
    """
    return membership_matrix(len(payments)) @ np.asarray(payments, dtype=float)


def supersets(mask: AgentSet, num_agents: int) -> np.ndarray:
    """
    Returns all agent sets W with mask ⊆ W, in ascending order.
    """
    masks = all_masks(num_agents)
    return masks[(masks & mask) == mask]


def disjoint_sets(mask: AgentSet, num_agents: int) -> np.ndarray:
    """
    Returns all agent sets T with T ∩ mask = ∅, in ascending order.
    """
    masks = all_masks(num_agents)
    return masks[(masks & mask) == 0]


def submasks(mask: AgentSet, num_agents: int) -> np.ndarray:
    """
    Returns all subsets T ⊆ mask, in ascending order.
    """
    masks = all_masks(num_agents)
    return masks[(masks & ~mask) == 0]
