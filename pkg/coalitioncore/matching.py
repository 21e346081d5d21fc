"""
Greedy matching with reserve prices: agents whose payment is below their
standalone value for an empty project move there, one at a time.
"""

from dataclasses import dataclass, field
import logging
from typing import Any

from dataclasses_json import dataclass_json
import numpy as np

from coalitioncore.config import config
from coalitioncore.model import Allocation, Instance, check_payments
from coalitioncore.utils import InternalInvariantError


@dataclass_json
@dataclass
class Move:
    """An agent moving to a previously empty project"""

    agent: int
    #: the agent's project before the move, None if it was unassigned
    source: int | None
    target: int
    payment: float


@dataclass
class MatchingResult:
    allocation: Allocation
    payments: np.ndarray
    moves: list[Move] = field(default_factory=list)

    def movers(self) -> set[int]:
        return {m.agent for m in self.moves}

    def move_log(self) -> list[dict[str, Any]]:
        return [m.to_dict() for m in self.moves]  # type: ignore[attr-defined]


def greedy_matching(
    inst: Instance,
    alloc_in: Allocation,
    pay_in: np.ndarray,
    tol: float | None = None,
) -> MatchingResult:
    """
    Runs the greedy matching with reserve prices. While some agent i is
    paid less than its standalone value v_k(i) for an empty project k,
    the lowest-indexed such agent moves to the empty project l with the
    highest v_l(i) (lowest l on ties) and is paid v_l(i) from then on.

    Payments never decrease, and every project that receives an agent
    holds exactly that agent afterwards.

    :param inst: the instance
    :param alloc_in: the initial allocation
    :param pay_in: the initial payments, used as reserve prices
    :param tol: comparison tolerance, defaults to the configured one
    :return: the final allocation, payments and the move log
    """
    tol = config.tolerance if tol is None else tol
    n, m = inst.num_agents, inst.num_projects
    singles = np.array([v.singleton_values() for v in inst.projects])
    payments = check_payments(pay_in, n, tol)
    alloc = alloc_in
    moves: list[Move] = []
    while True:
        empty = sorted(alloc.empty_projects())
        if not empty:
            break
        gains = singles[empty]
        wants_to_move = (gains > payments + tol).any(axis=0)
        if not wants_to_move.any():
            break
        agent = int(np.flatnonzero(wants_to_move)[0])
        values = gains[:, agent]
        target = empty[int(np.flatnonzero(values >= values.max() - tol)[0])]
        move = Move(agent, alloc.project_of(agent), target, float(singles[target, agent]))
        alloc = alloc.with_moved(1 << agent, target)
        payments[agent] = move.payment
        moves.append(move)
        # every move raises the mover's payment to one of at most m values
        if len(moves) > n * m:
            raise InternalInvariantError(
                f"Greedy matching did not terminate within N·m = {n * m} moves"
            )
    if moves:
        logging.debug(f"Greedy matching moved {len(moves)} agent(s): {alloc.describe()}")
    return MatchingResult(alloc, payments, moves)
