import json

import numpy as np
import pytest

from coalitioncore import model
from coalitioncore.model import Allocation, Solution, basic_metrics, social_welfare
from coalitioncore.utils import InstanceValidationError
from coalitioncore.valuations import AnonymousValuation, ExplicitValuation


def test_example1_fixture(example1):
    """
    Tests loading the bundled Example 1 instance
    """
    assert example1.num_agents == 4 and example1.num_projects == 2
    assert example1.name == "example1"
    v1, v2 = example1.projects
    assert isinstance(v1, ExplicitValuation) and isinstance(v2, AnonymousValuation)
    assert v1.value(0b0111) == 2.0 and v1.value(0b1111) == 4.0
    assert v2.value(0b0011) == pytest.approx(1.1)


def test_allocation_invariants():
    alloc = Allocation.from_assignment([0, 1, None, 0], 3)
    assert alloc.sets == (0b1001, 0b0010, 0)
    assert alloc.assignment() == [0, 1, None, 0]
    assert alloc.project_of(2) is None and alloc.project_of(3) == 0
    assert not alloc.is_full()
    assert alloc.empty_projects() == {2}
    assert model.empty_projects(alloc) == {2}

    moved = alloc.with_moved(0b0101, 2)
    assert moved.sets == (0b1000, 0b0010, 0b0101)
    assert moved.is_full()
    assert alloc.with_moved(0b0010, None).sets == (0b1001, 0, 0)

    with pytest.raises(InstanceValidationError, match="more than one project"):
        Allocation((0b011, 0b110), 3)
    with pytest.raises(InstanceValidationError):
        Allocation.from_assignment([0, 2], 2)
    assert Allocation.all_on(1, 3, 2).sets == (0, 7)
    assert Allocation.empty(3, 2).assigned() == 0


def test_welfare_and_metrics(example1):
    alloc = Allocation.from_assignment([1, 0, 0, 0], 2)
    assert social_welfare(example1, alloc) == pytest.approx(3.1)
    metrics = basic_metrics(example1, alloc, np.array([1.1, 1.0, 1.0, 1.0]))
    assert metrics.total_payment == pytest.approx(4.1)
    assert metrics.beta_budget == pytest.approx(4.1 / 3.1)
    assert basic_metrics(example1, Allocation.empty(4, 2), np.zeros(4)).beta_budget is None
    with pytest.raises(InstanceValidationError):
        social_welfare(example1, Allocation.empty(4, 3))


def test_check_payments():
    assert list(model.check_payments([1, 0], 2)) == [1.0, 0.0]
    with pytest.raises(InstanceValidationError, match="negative"):
        model.check_payments([1, -0.5], 2)
    with pytest.raises(InstanceValidationError):
        model.check_payments([1, 2, 3], 2)


def test_instance_document_errors(tmp_path):
    with pytest.raises(InstanceValidationError, match="Missing instance file"):
        model.load_instance(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{", encoding="utf-8")
    with pytest.raises(InstanceValidationError, match="invalid JSON"):
        model.load_instance(broken)
    with pytest.raises(InstanceValidationError, match="agents"):
        model.instance_from_dict({"agents": "4", "projects": []})
    with pytest.raises(InstanceValidationError, match="projects"):
        model.instance_from_dict({"agents": 2, "projects": []})
    non_monotone = {"agents": 1, "projects": [{"kind": "anonymous", "values": [0, -1]}]}
    with pytest.raises(InstanceValidationError):
        model.instance_from_dict(non_monotone)
    assert model.instance_from_dict(non_monotone, validate=False).num_agents == 1


def test_large_explicit_instance_loads(caplog):
    """Above the exhaustive limit, explicit tables load with a warning instead of a monotonicity check"""
    n = 17
    values = {str(s): float(s.bit_count()) for s in range(1, 1 << n)}
    data = {
        "agents": n,
        "projects": [
            {"kind": "explicit", "values": values},
            {"kind": "anonymous", "values": list(range(n + 1))},
        ],
    }
    inst = model.instance_from_dict(data)
    assert inst.num_agents == n
    assert inst.projects[0].value((1 << n) - 1) == n
    assert "not checked" in caplog.text


def test_save_and_load(tmp_path, example1):
    """
    Saves an instance and a solution and checks that both documents can be
    loaded again
    """
    path = tmp_path / "instances" / "example1.json"
    model.save_instance(path, example1)
    loaded = model.load_instance(path)
    assert loaded.name == "example1"
    assert list(loaded.projects[0].table) == list(example1.projects[0].table)

    alloc = Allocation.from_assignment([1, 0, 0, 0], 2)
    payments = np.array([1.1, 1.0, 1.0, 1.0])
    sol = Solution(alloc, payments, basic_metrics(example1, alloc, payments), "manual")
    sol_path = tmp_path / "solution.json"
    model.save_solution(sol_path, sol)
    with open(sol_path, encoding="utf-8") as f:
        document = json.load(f)
    assert document["assignment"] == [1, 0, 0, 0]
    assert document["method"] == "manual"
    restored = model.load_solution(sol_path, example1)
    assert restored.allocation == alloc
    assert restored.metrics is not None
    assert restored.metrics.welfare == pytest.approx(3.1)

    with pytest.raises(InstanceValidationError):
        model.solution_from_dict({"assignment": [0, 0], "payments": [0, 0]}, example1)
