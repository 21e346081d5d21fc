"""
Defines the core game objects: instances, allocations, payment vectors
and solutions, as well as social welfare accounting and file I/O for
instance and solution documents.
"""

from dataclasses import dataclass, field
import json
import logging
from pathlib import Path
from typing import TYPE_CHECKING, Any, Sequence

from dataclasses_json import dataclass_json
import numpy as np

from coalitioncore import agent_sets
from coalitioncore.agent_sets import AgentSet
from coalitioncore.config import config
from coalitioncore.utils import InstanceValidationError
from coalitioncore.valuations import Valuation

if TYPE_CHECKING:
    from coalitioncore.welfare_opt import DualSolution

#: path of the bundled Example 1 instance
EXAMPLE1_PATH = Path(__file__).parent / "instances" / "example1.json"


@dataclass(frozen=True, eq=False)
class Instance:
    """
    A coalition formation game: N agents and a list of projects, each
    with its own monotone valuation function.
    """

    num_agents: int
    projects: tuple[Valuation, ...]
    name: str | None = None

    def __post_init__(self):
        if self.num_agents < 1:
            raise InstanceValidationError(f"agents: N must be at least 1 (got {self.num_agents})")
        if len(self.projects) < 1:
            raise InstanceValidationError("projects: an instance needs at least one project")
        for k, v in enumerate(self.projects):
            if v.num_agents != self.num_agents:
                raise InstanceValidationError(
                    f"projects[{k}]: valuation is defined for {v.num_agents} agents "
                    f"instead of {self.num_agents}"
                )

    @property
    def num_projects(self) -> int:
        return len(self.projects)

    def validate(self, tol: float | None = None) -> None:
        """
        Checks normalization and monotonicity of all valuations.

        :raises InstanceValidationError: if a valuation violates an invariant
        """
        for k, v in enumerate(self.projects):
            v.validate(tol, f"projects[{k}]")

    def __str__(self) -> str:
        name = self.name or "unnamed instance"
        return f"{name} (N={self.num_agents}, m={self.num_projects})"


@dataclass(frozen=True)
class Allocation:
    """
    Assignment of agents to projects: one agent set per project. The sets
    are pairwise disjoint; agents may remain unassigned.
    """

    sets: tuple[AgentSet, ...]
    num_agents: int

    def __post_init__(self):
        union = 0
        for k, s in enumerate(self.sets):
            agent_sets.check_mask(s, self.num_agents, f"allocation[{k}]")
            if union & s:
                raise InstanceValidationError(
                    f"allocation[{k}]: agents {agent_sets.members(union & s)} are "
                    "assigned to more than one project"
                )
            union |= s

    @property
    def num_projects(self) -> int:
        return len(self.sets)

    @staticmethod
    def from_assignment(
        assignment: Sequence[int | None], num_projects: int
    ) -> "Allocation":
        """
        Creates an allocation from a list that maps each agent to a project
        index, or None for unassigned agents.

        :param assignment: the project of each agent
        :param num_projects: the number of projects m
        :return: the allocation
        """
        sets = [0] * num_projects
        for i, k in enumerate(assignment):
            if k is None:
                continue
            if not 0 <= k < num_projects:
                raise InstanceValidationError(
                    f"assignment[{i}]: project index {k} outside 0..{num_projects - 1}"
                )
            sets[k] |= 1 << i
        return Allocation(tuple(sets), len(assignment))

    @staticmethod
    def all_on(project: int, num_agents: int, num_projects: int) -> "Allocation":
        return Allocation.from_assignment([project] * num_agents, num_projects)

    @staticmethod
    def empty(num_agents: int, num_projects: int) -> "Allocation":
        return Allocation((0,) * num_projects, num_agents)

    def assignment(self) -> list[int | None]:
        """
        Returns the project index of each agent, None for unassigned agents.
        """
        result: list[int | None] = [None] * self.num_agents
        for k, s in enumerate(self.sets):
            for i in agent_sets.members(s):
                result[i] = k
        return result

    def project_of(self, agent: int) -> int | None:
        for k, s in enumerate(self.sets):
            if agent_sets.contains(s, agent):
                return k
        return None

    def assigned(self) -> AgentSet:
        union = 0
        for s in self.sets:
            union |= s
        return union

    def is_full(self) -> bool:
        return self.assigned() == agent_sets.full_mask(self.num_agents)

    def empty_projects(self) -> set[int]:
        return {k for k, s in enumerate(self.sets) if not s}

    def with_moved(self, agents: AgentSet, project: int | None) -> "Allocation":
        """
        Returns a new allocation in which the given agents are moved to a
        project (or unassigned, if project is None).

        :param agents: the agents to move
        :param project: the destination project
        :return: the new allocation
        """
        sets = [s & ~agents for s in self.sets]
        if project is not None:
            sets[project] |= agents
        return Allocation(tuple(sets), self.num_agents)

    def describe(self) -> str:
        return ", ".join(
            f"{agent_sets.members(s)}->p{k}" for k, s in enumerate(self.sets) if s
        )


def check_payments(
    payments: Sequence[float] | np.ndarray, num_agents: int, tol: float | None = None
) -> np.ndarray:
    """
    Validates a payment vector and returns it as float array.

    :param payments: one payment per agent
    :param num_agents: the number of agents N
    :param tol: comparison tolerance, defaults to the configured one
    :raises InstanceValidationError: for wrong lengths or negative payments
    :return: the payments as a new numpy array
    """
    tol = config.tolerance if tol is None else tol
    p = np.array(payments, dtype=float)
    if p.shape != (num_agents,):
        raise InstanceValidationError(
            f"payments: need one payment per agent (got shape {p.shape})"
        )
    if (p < -tol).any():
        i = int(np.flatnonzero(p < -tol)[0])
        raise InstanceValidationError(f"payments[{i}]: negative payment {p[i]}")
    return p


@dataclass_json
@dataclass
class SolutionMetrics:
    """
    Quality metrics of a solution. Optional values are None if they were
    not computed (e.g. because the instance is too large for a scan).
    """

    welfare: float
    total_payment: float
    #: total payment divided by welfare
    beta_budget: float | None = None
    #: smallest α for which the solution is α-stable
    alpha_stability: float | None = None
    #: welfare divided by the optimal welfare
    welfare_ratio_vs_opt: float | None = None
    #: objective of the configuration LP dual, if used
    dual_objective: float | None = None
    #: method specific values, e.g. iteration counts
    extra: dict[str, float] = field(default_factory=dict)


@dataclass(eq=False)
class Solution:
    """
    An allocation together with a payment vector and its certified
    quality metrics.
    """

    allocation: Allocation
    payments: np.ndarray
    metrics: SolutionMetrics | None = None
    #: name of the method that produced the solution
    method: str = ""
    dual: "DualSolution | None" = None
    #: serializable log of the algorithm run, if requested
    trace: list[dict[str, Any]] | None = None

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "method": self.method,
            "assignment": self.allocation.assignment(),
            "projects": self.allocation.num_projects,
            "payments": [float(p) for p in self.payments],
            "metrics": self.metrics.to_dict() if self.metrics else None,  # type: ignore[attr-defined]
        }
        if self.dual is not None:
            data["dual"] = self.dual.to_dict()  # type: ignore[attr-defined]
        if self.trace is not None:
            data["trace"] = self.trace
        return data


def social_welfare(inst: Instance, alloc: Allocation) -> float:
    """
    Calculates the social welfare, i.e. the sum of all project values.

    :param inst: the instance
    :param alloc: an allocation for the instance
    :return: the social welfare
    """
    if alloc.num_projects != inst.num_projects or alloc.num_agents != inst.num_agents:
        raise InstanceValidationError(
            f"Allocation for {alloc.num_agents} agents and {alloc.num_projects} projects "
            f"does not match instance {inst}"
        )
    return float(sum(v.value(s) for v, s in zip(inst.projects, alloc.sets)))


def empty_projects(alloc: Allocation) -> set[int]:
    return alloc.empty_projects()


def basic_metrics(inst: Instance, alloc: Allocation, payments: np.ndarray) -> SolutionMetrics:
    """
    Calculates welfare, total payment and budget factor of a solution.
    """
    welfare = social_welfare(inst, alloc)
    total = float(np.sum(payments))
    beta = total / welfare if welfare > config.tolerance else None
    return SolutionMetrics(welfare, total, beta)


def instance_from_dict(data: dict[str, Any], validate: bool = True) -> Instance:
    """
    Creates an instance from a parsed instance document.

    :param data: the parsed JSON document
    :param validate: whether to check normalization and monotonicity
    :raises InstanceValidationError: for schema or invariant violations
    :return: the instance
    """
    if not isinstance(data, dict):
        raise InstanceValidationError("<root>: expected a JSON object")
    num_agents = data.get("agents")
    if not isinstance(num_agents, int) or isinstance(num_agents, bool):
        raise InstanceValidationError("agents: expected an integer agent count")
    projects = data.get("projects")
    if not isinstance(projects, list) or not projects:
        raise InstanceValidationError("projects: expected a nonempty list of valuations")
    valuations = tuple(
        Valuation.from_dict(p, num_agents, f"projects[{k}]") for k, p in enumerate(projects)
    )
    name = data.get("name")
    if name is not None and not isinstance(name, str):
        raise InstanceValidationError("name: expected a string")
    inst = Instance(num_agents, valuations, name)
    if validate:
        inst.validate()
    return inst


def instance_to_dict(inst: Instance) -> dict[str, Any]:
    data: dict[str, Any] = {}
    if inst.name is not None:
        data["name"] = inst.name
    data["agents"] = inst.num_agents
    data["projects"] = [v.to_dict() for v in inst.projects]
    return data


def load_instance(path: Path | str) -> Instance:
    """
    Loads and validates an instance file.

    :param path: path of the JSON instance document
    :raises InstanceValidationError: if the file is missing or invalid
    :return: the instance
    """
    path = Path(path)
    if not path.is_file():
        raise InstanceValidationError(f"Missing instance file: {path}")
    with open(path, encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise InstanceValidationError(f"{path}: invalid JSON: {e}")
    inst = instance_from_dict(data)
    logging.debug(f"Loaded instance {inst} from {path}")
    return inst


def load_example1() -> Instance:
    return load_instance(EXAMPLE1_PATH)


def save_instance(path: Path | str, inst: Instance) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(instance_to_dict(inst), f, indent=4)
    logging.debug(f"Created instance file {path}")


def save_solution(path: Path | str, sol: Solution) -> None:
    """
    Saves a solution document.

    :param path: destination path
    :param sol: the solution to save
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(sol.to_dict(), f, indent=4)
    logging.debug(f"Created solution file {path}")


def solution_from_dict(data: dict[str, Any], inst: Instance) -> Solution:
    """
    Creates a solution from a parsed solution document. Metrics are
    taken over as stored; use the verify module to recompute them.

    :param data: the parsed JSON document
    :param inst: the instance the solution belongs to
    :raises InstanceValidationError: for schema violations
    :return: the solution
    """
    try:
        assignment = data["assignment"]
        payments = data["payments"]
    except (KeyError, TypeError):
        raise InstanceValidationError("solution: 'assignment' and 'payments' are required")
    if len(assignment) != inst.num_agents:
        raise InstanceValidationError(
            f"assignment: expected {inst.num_agents} entries (got {len(assignment)})"
        )
    alloc = Allocation.from_assignment(assignment, inst.num_projects)
    p = check_payments(payments, inst.num_agents)
    metrics = None
    if data.get("metrics"):
        metrics = SolutionMetrics.from_dict(data["metrics"])  # type: ignore[attr-defined]
    dual = None
    if data.get("dual"):
        from coalitioncore.welfare_opt import DualSolution

        dual = DualSolution.from_dict(data["dual"])  # type: ignore[attr-defined]
    return Solution(alloc, p, metrics, data.get("method", ""), dual, data.get("trace"))


def load_solution(path: Path | str, inst: Instance) -> Solution:
    path = Path(path)
    if not path.is_file():
        raise InstanceValidationError(f"Missing solution file: {path}")
    with open(path, encoding="utf-8") as f:
        return solution_from_dict(json.load(f), inst)
