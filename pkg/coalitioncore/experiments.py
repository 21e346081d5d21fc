"""
Runs solution methods on generated instances, certifies every result and
collects the metrics in a table.
"""

from dataclasses import dataclass
from enum import StrEnum
import logging
from pathlib import Path
from typing import ClassVar

import pandas as pd
from tqdm import tqdm

from coalitioncore import blackbox, class_solvers, verify
from coalitioncore.generators import GeneratorSpec, generate
from coalitioncore.model import Allocation, Instance, Solution
from coalitioncore.utils import ValuationClassError, timing
from coalitioncore.valuations import AnonymousValuation
from coalitioncore.welfare_opt import brute_force_opt, greedy_anonymous, greedy_submodular


class Method(StrEnum):
    submodular = "submodular"
    anonymous = "anonymous"
    anonymous_ef = "anonymous-ef"
    xos_exact = "xos-exact"
    best_response = "best-response"
    xos_dual = "xos-dual"
    stabilize = "stabilize"


#: methods that improve a given input allocation
ALLOCATION_METHODS = {Method.best_response, Method.xos_dual, Method.stabilize}


def input_allocation(inst: Instance, source: str) -> Allocation:
    """
    Determines the start allocation for methods that need one.

    :param inst: the instance
    :param source: 'opt' for the brute force optimum, 'greedy' for the
                   greedy algorithm matching the project kinds
    :raises ValuationClassError: if no greedy algorithm fits the projects
    :return: the allocation
    """
    if source == "opt":
        return brute_force_opt(inst)[0]
    if source == "greedy":
        if all(isinstance(v, AnonymousValuation) for v in inst.projects):
            return greedy_anonymous(inst).allocation
        if all(v.submodular_kind for v in inst.projects):
            return greedy_submodular(inst).allocation
        raise ValuationClassError(
            "A greedy start allocation needs all projects to be anonymous or of a submodular kind"
        )
    raise ValueError(f"Unknown input allocation source '{source}'")


def solve(
    inst: Instance,
    method: Method,
    alloc: Allocation | None = None,
    epsilon: float | None = None,
    with_trace: bool = False,
) -> Solution:
    """
    Runs a solution method.

    :param inst: the instance
    :param method: the method to run
    :param alloc: start allocation for the methods that need one; the
                  brute force optimum by default
    :param epsilon: markup factor of the best-response dynamics
    :param with_trace: whether the solution should keep its trace
    :return: the solution
    """
    method = Method(method)
    if method in ALLOCATION_METHODS and alloc is None:
        alloc = input_allocation(inst, "opt")
    match method:
        case Method.submodular:
            sol = class_solvers.submodular_core(inst)
        case Method.anonymous | Method.anonymous_ef:
            sol = class_solvers.anonymous_core(inst, envy_free=method == Method.anonymous_ef)
        case Method.xos_exact:
            sol = class_solvers.xos_exact_core(inst)
        case Method.best_response:
            sol = class_solvers.best_response_core(inst, alloc, epsilon)  # type: ignore[arg-type]
        case Method.xos_dual:
            sol = class_solvers.xos_no_oracle_core(inst, alloc)  # type: ignore[arg-type]
        case Method.stabilize:
            sol = blackbox.stabilize(inst, alloc, with_trace=with_trace)  # type: ignore[arg-type]
    if not with_trace and method != Method.stabilize:
        sol.trace = None
    return sol


@dataclass
class BenchRow:
    family: str
    seed: int
    agents: int
    projects: int
    method: str
    welfare: float
    opt_welfare: float
    welfare_ratio: float
    alpha_star: float
    beta: float | None
    iterations: int
    dual_objective: float | None
    passed: bool

    columns: ClassVar[list[str]] = [
        "family",
        "seed",
        "agents",
        "projects",
        "method",
        "welfare",
        "opt_welfare",
        "welfare_ratio",
        "alpha_star",
        "beta",
        "iterations",
        "dual_objective",
        "passed",
    ]


def bench_instance(spec: GeneratorSpec, method: Method, epsilon: float | None = None) -> BenchRow:
    """
    Generates one instance, solves it and certifies the solution against
    an exhaustive stability scan and the brute force optimum.
    """
    inst = generate(spec)
    _, opt_welfare = brute_force_opt(inst)
    sol = solve(inst, method, epsilon=epsilon)
    report = verify.certify(inst, sol, 1.0, opt_welfare)
    metrics = sol.metrics
    assert metrics is not None
    return BenchRow(
        family=str(spec.family),
        seed=spec.seed,
        agents=inst.num_agents,
        projects=inst.num_projects,
        method=str(method),
        welfare=metrics.welfare,
        opt_welfare=opt_welfare,
        welfare_ratio=metrics.welfare_ratio_vs_opt or 0.0,
        alpha_star=report.alpha_star,
        beta=metrics.beta_budget,
        iterations=int(metrics.extra.get("iterations", 0)),
        dual_objective=metrics.dual_objective,
        passed=report.passed,
    )


@timing
def bench(
    base: GeneratorSpec,
    method: Method,
    seeds: range,
    epsilon: float | None = None,
    result_path: Path | None = None,
) -> pd.DataFrame:
    """
    Runs a method on a range of seeded instances of one family.

    :param base: generator parameters; the seed is replaced for every run
    :param method: the method to run
    :param seeds: the seeds to run
    :param epsilon: markup factor of the best-response dynamics
    :param result_path: optional CSV file to save the results to
    :return: one row per seed, in seed order
    """
    rows = []
    for seed in tqdm(seeds, desc=f"{base.family} / {method}"):
        spec = GeneratorSpec(base.family, base.agents, base.projects, seed, base.epsilon, base.params)
        rows.append(bench_instance(spec, method, epsilon))
    table = pd.DataFrame([vars(r) for r in rows], columns=BenchRow.columns)
    failed = int((~table["passed"]).sum())
    logging.info(f"Benchmarked {len(table)} instances, {failed} failed verification")
    if result_path is not None:
        result_path.parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(result_path, index=False)
        logging.info(f"Saved bench results to {result_path}")
    return table
