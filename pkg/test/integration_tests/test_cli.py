import json

import pandas as pd
import pytest

from coalitioncore import cli


def _run(capsys, *argv: str) -> tuple[int, dict]:
    """Runs a command that prints JSON and returns the exit code and the document"""
    code = cli.main(list(argv))
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip() else {}


@pytest.fixture
def example1_file(tmp_path):
    path = tmp_path / "example1.json"
    assert cli.main(["gen", "--family", "example1", "-o", str(path)]) == cli.EXIT_OK
    return path


def test_gen_writes_provenance(capsys):
    code, data = _run(capsys, "gen", "--family", "random-xos", "-n", "3", "-m", "2", "--seed", "5")
    assert code == cli.EXIT_OK
    assert data["agents"] == 3 and len(data["projects"]) == 2
    assert data["generator"]["seed"] == 5
    assert data["rng"] == "numpy.PCG64"


def test_gen_family_parameters(capsys):
    code, data = _run(capsys, "gen", "--family", "random-coverage", "-n", "5", "--universe", "3")
    assert code == cli.EXIT_OK
    assert data["generator"]["params"] == {"universe": 3}
    for project in data["projects"]:
        assert project["universe"] == 3
        assert all(0 <= e < 3 for s in project["sets"] for e in s)

    code, data = _run(capsys, "gen", "--family", "random-xos", "-n", "4", "-m", "3", "--max-clauses", "1")
    assert code == cli.EXIT_OK
    assert all(len(p["clauses"]) == 1 for p in data["projects"])


def test_example1_workflow(tmp_path, capsys, example1_file):
    """
    Runs the whole Example 1 workflow: optimum, LP, stabilization,
    verification and the flipped auction
    """
    code, opt = _run(capsys, "opt", "-i", str(example1_file))
    assert code == cli.EXIT_OK
    assert opt["welfare"] == pytest.approx(4.0)

    code, dual = _run(capsys, "lp", "-i", str(example1_file))
    assert code == cli.EXIT_OK
    assert dual["objective"] == pytest.approx(133 / 30, abs=1e-6)

    solution = tmp_path / "solution.json"
    code = cli.main(["stabilize", "-i", str(example1_file), "--trace", "-o", str(solution)])
    assert code == cli.EXIT_OK
    document = json.loads(solution.read_text(encoding="utf-8"))
    assert document["assignment"] == [1, 0, 0, 0]
    assert document["metrics"]["welfare_ratio_vs_opt"] == pytest.approx(3.1 / 4)
    assert document["trace"][0]["phase"] == 1

    code, report = _run(capsys, "verify", "-i", str(example1_file), "-s", str(solution))
    assert code == cli.EXIT_OK
    assert report["passed"]
    assert report["total_payment"] == pytest.approx(133 / 30, abs=1e-6)

    bids = tmp_path / "bids.json"
    assert cli.main(["auction", "flip", "-i", str(example1_file), "-s", str(solution), "-o", str(bids)]) == 0
    code, report = _run(capsys, "auction", "verify", "-i", str(example1_file), "-b", str(bids))
    assert code == cli.EXIT_VERIFICATION_FAILED
    assert report["alpha_star"] == pytest.approx(1.45, abs=1e-6)
    code, _ = _run(capsys, "auction", "verify", "-i", str(example1_file), "-b", str(bids), "--alpha", "1.5")
    assert code == cli.EXIT_OK


def test_verify_detects_unstable_solution(tmp_path, capsys, example1_file):
    solution = tmp_path / "unstable.json"
    solution.write_text(
        json.dumps({"assignment": [0, 0, 0, 0], "payments": [1, 1, 1, 1]}), encoding="utf-8"
    )
    code, report = _run(capsys, "verify", "-i", str(example1_file), "-s", str(solution))
    assert code == cli.EXIT_VERIFICATION_FAILED
    assert not report["passed"]
    assert report["worst_project"] == 1
    code, _ = _run(capsys, "verify", "-i", str(example1_file), "-s", str(solution), "--alpha", "1.1")
    assert code == cli.EXIT_OK


def test_lower_bound(capsys, example1_file):
    code, data = _run(capsys, "lower-bound", "-i", str(example1_file))
    assert code == cli.EXIT_OK
    assert data["min_beta"] == pytest.approx(1.1, abs=1e-6)
    assert data["exact_core_exists"] is False


def test_solve_methods(tmp_path, capsys):
    path = tmp_path / "claim4.json"
    assert cli.main(["gen", "--family", "claim4-part1", "-n", "4", "-o", str(path)]) == 0
    code, sol = _run(capsys, "solve", "-i", str(path), "--method", "anonymous")
    assert code == cli.EXIT_OK
    assert sol["payments"] == [4.0, 4.0, 0.0, 0.0]
    assert sol["metrics"]["beta_budget"] == pytest.approx(2.0)

    code, data = _run(capsys, "auction", "approx-ne", "-i", str(path), "--method", "anonymous")
    assert code == cli.EXIT_OK
    assert data["report"]["is_equilibrium"]

    code, _ = _run(capsys, "solve", "-i", str(path), "--method", "submodular")
    assert code == cli.EXIT_USAGE, "Instances that are not submodular must be rejected"
    code, _ = _run(capsys, "stabilize", "-i", str(path), "--input-alloc", "greedy")
    assert code == cli.EXIT_OK


def test_input_allocation_file(tmp_path, capsys, example1_file):
    alloc = tmp_path / "alloc.json"
    alloc.write_text(json.dumps({"assignment": [1, 1, 1, 1]}), encoding="utf-8")
    code, sol = _run(
        capsys, "stabilize", "-i", str(example1_file), "--input-alloc", "file", "--alloc-file", str(alloc)
    )
    assert code == cli.EXIT_OK
    assert sol["metrics"]["welfare"] >= 1.1 / 2
    code, _ = _run(capsys, "stabilize", "-i", str(example1_file), "--input-alloc", "file")
    assert code == cli.EXIT_USAGE
    alloc.write_text(json.dumps({"assignment": [1, 1]}), encoding="utf-8")
    code, _ = _run(
        capsys, "stabilize", "-i", str(example1_file), "--input-alloc", "file", "--alloc-file", str(alloc)
    )
    assert code == cli.EXIT_USAGE


def test_invalid_input(tmp_path, capsys):
    code, _ = _run(capsys, "opt", "-i", str(tmp_path / "missing.json"))
    assert code == cli.EXIT_USAGE
    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps({"agents": 2, "projects": [{"kind": "anonymous", "values": [0, 2, 1]}]}))
    code, _ = _run(capsys, "lp", "-i", str(broken))
    assert code == cli.EXIT_USAGE
    with pytest.raises(SystemExit):
        cli.main(["solve", "-i", str(broken), "--method", "stabilize"])


def test_bench(tmp_path):
    path = tmp_path / "bench.csv"
    code = cli.main(
        ["bench", "--family", "random-coverage", "--method", "submodular", "-n", "4", "--seeds", "3", "-o", str(path)]
    )
    assert code == cli.EXIT_OK
    table = pd.read_csv(path)
    assert list(table["seed"]) == [0, 1, 2]
    assert table["passed"].all()
