"""
Command line interface of coalitioncore. Results are printed as JSON to
stdout (or written to --out), summaries are logged to stderr.

Exit codes: 0 on success, 1 if a result fails its verification, 2 on
invalid usage or input.
"""

import argparse
import json
import logging
from pathlib import Path
import sys
from typing import Any

from coalitioncore import auctions, verify
from coalitioncore.blackbox import stabilize
from coalitioncore.config import config
from coalitioncore.experiments import (
    ALLOCATION_METHODS,
    Method,
    bench,
    input_allocation,
    solve,
)
from coalitioncore.generators import RNG_ALGORITHM, Family, GeneratorSpec, generate
from coalitioncore.model import (
    Allocation,
    Instance,
    Solution,
    instance_to_dict,
    load_instance,
    load_solution,
    save_solution,
)
from coalitioncore.utils import (
    CoalitionCoreException,
    InstanceValidationError,
    InternalInvariantError,
    NotAnEquilibriumError,
)
from coalitioncore.welfare_opt import brute_force_opt, solve_config_lp

EXIT_OK = 0
EXIT_VERIFICATION_FAILED = 1
EXIT_USAGE = 2


def _emit(data: dict[str, Any], out: Path | None) -> None:
    text = json.dumps(data, indent=4)
    if out is None:
        print(text)
        return
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text + "\n", encoding="utf-8")
    logging.info(f"Wrote {out}")


def _read_json(path: Path) -> Any:
    if not path.is_file():
        raise InstanceValidationError(f"Missing file: {path}")
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def _load_allocation(inst: Instance, source: str, alloc_file: Path | None) -> Allocation:
    if source != "file":
        return input_allocation(inst, source)
    if alloc_file is None:
        raise InstanceValidationError("--input-alloc file needs --alloc-file")
    data = _read_json(alloc_file)
    if not isinstance(data, dict) or "assignment" not in data:
        raise InstanceValidationError(f"{alloc_file}: missing 'assignment'")
    assignment = data["assignment"]
    if len(assignment) != inst.num_agents:
        raise InstanceValidationError(
            f"assignment: expected {inst.num_agents} entries (got {len(assignment)})"
        )
    return Allocation.from_assignment(assignment, inst.num_projects)


def _finish_solution(inst: Instance, sol: Solution, args: argparse.Namespace) -> int:
    """Self-verifies a solution, emits it and returns the exit code"""
    opt_welfare = None
    try:
        opt_welfare = brute_force_opt(inst)[1]
    except CoalitionCoreException:
        logging.warning("Optimal welfare is out of reach, skipping the welfare ratio")
    report = verify.certify(inst, sol, 1.0, opt_welfare)
    if args.out is None:
        _emit(sol.to_dict(), None)
    else:
        save_solution(args.out, sol)
    logging.info(f"{sol.method}: welfare {report.welfare:.6g}, {report.summary()}")
    return EXIT_OK if report.passed else EXIT_VERIFICATION_FAILED


def cmd_gen(args: argparse.Namespace) -> int:
    params = {
        key: value
        for key, value in (("universe", args.universe), ("max_clauses", args.max_clauses))
        if value is not None
    }
    spec = GeneratorSpec(
        Family(args.family), args.agents, args.projects, args.seed, args.epsilon, params
    )
    inst = generate(spec)
    data = instance_to_dict(inst)
    data["generator"] = spec.to_dict()  # type: ignore[attr-defined]
    data["rng"] = RNG_ALGORITHM
    _emit(data, args.out)
    logging.info(f"Generated {inst}")
    return EXIT_OK


def cmd_opt(args: argparse.Namespace) -> int:
    inst = load_instance(args.instance)
    alloc, welfare = brute_force_opt(inst)
    _emit({"assignment": alloc.assignment(), "welfare": welfare}, args.out)
    logging.info(f"Optimal welfare of {inst}: {welfare:.6g}")
    return EXIT_OK


def cmd_lp(args: argparse.Namespace) -> int:
    inst = load_instance(args.instance)
    objective, dual = solve_config_lp(inst)
    _emit(dual.to_dict(), args.out)  # type: ignore[attr-defined]
    logging.info(f"Configuration LP optimum of {inst}: {objective:.6g}")
    return EXIT_OK


def cmd_solve(args: argparse.Namespace) -> int:
    inst = load_instance(args.instance)
    method = Method(args.method)
    alloc = None
    if method in ALLOCATION_METHODS:
        alloc = _load_allocation(inst, args.input_alloc, args.alloc_file)
    sol = solve(inst, method, alloc, args.epsilon, args.trace)
    return _finish_solution(inst, sol, args)


def cmd_stabilize(args: argparse.Namespace) -> int:
    inst = load_instance(args.instance)
    alloc = _load_allocation(inst, args.input_alloc, args.alloc_file)
    sol = stabilize(inst, alloc, with_trace=args.trace)
    return _finish_solution(inst, sol, args)


def cmd_verify(args: argparse.Namespace) -> int:
    inst = load_instance(args.instance)
    sol = load_solution(args.solution, inst)
    report = verify.certify(inst, sol, args.alpha, tol=args.tolerance)
    _emit(report.to_dict(), args.out)  # type: ignore[attr-defined]
    logging.info(report.summary())
    return EXIT_OK if report.passed else EXIT_VERIFICATION_FAILED


def cmd_lower_bound(args: argparse.Namespace) -> int:
    inst = load_instance(args.instance)
    beta, alloc = verify.min_beta_over_allocations(inst)
    exact_core = beta <= 1 + config.lp_tolerance
    _emit(
        {"min_beta": beta, "assignment": alloc.assignment(), "exact_core_exists": exact_core},
        args.out,
    )
    logging.info(
        f"Smallest budget factor {beta:.6g}: "
        + ("an exact core exists" if exact_core else "no exact core")
    )
    return EXIT_OK


def cmd_auction_flip(args: argparse.Namespace) -> int:
    inst = load_instance(args.instance)
    sol = load_solution(args.solution, inst)
    profile = auctions.flip_core_to_bids(sol)
    _emit(profile.to_dict(), args.out)
    return EXIT_OK


def cmd_auction_verify(args: argparse.Namespace) -> int:
    inst = load_instance(args.instance)
    profile = auctions.BidProfile.from_dict(_read_json(args.bids))
    report = auctions.verify_equilibrium(inst, profile, args.alpha)
    _emit(report.to_dict(), args.out)  # type: ignore[attr-defined]
    logging.info(report.summary())
    return EXIT_OK if report.is_equilibrium else EXIT_VERIFICATION_FAILED


def cmd_auction_approx_ne(args: argparse.Namespace) -> int:
    inst = load_instance(args.instance)
    if args.method == "anonymous":
        result = auctions.approx_ne_anonymous(inst)
    else:
        result = auctions.approx_ne_submodular(inst, args.epsilon)
    data = {
        **result.bids.to_dict(),
        "report": result.report.to_dict(),  # type: ignore[attr-defined]
        "moves": result.moves,
    }
    _emit(data, args.out)
    logging.info(result.report.summary())
    return EXIT_OK if result.report.is_equilibrium else EXIT_VERIFICATION_FAILED


def cmd_bench(args: argparse.Namespace) -> int:
    spec = GeneratorSpec(Family(args.family), args.agents, args.projects)
    seeds = range(args.seed_start, args.seed_start + args.seeds)
    table = bench(spec, Method(args.method), seeds, args.epsilon, args.out)
    if args.out is None:
        print(table.to_csv(index=False), end="")
    return EXIT_OK if table["passed"].all() else EXIT_VERIFICATION_FAILED


def _add_instance(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-i", "--instance", type=Path, required=True, help="Instance JSON file")


def _add_out(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-o", "--out", type=Path, help="Output file, stdout by default")


def _add_input_alloc(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--input-alloc",
        choices=["opt", "greedy", "file"],
        default="opt",
        help="Start allocation: brute force optimum, greedy, or read from --alloc-file",
    )
    parser.add_argument("--alloc-file", type=Path, help="JSON file with an 'assignment' list")
    parser.add_argument("--trace", action="store_true", help="Include the algorithm trace")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coalition-core",
        description="Core stable coalition formation: solvers, verification and auctions",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Log debug messages")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen", help="Generate an instance")
    gen.add_argument("--family", choices=[f.value for f in Family], required=True)
    gen.add_argument("-n", "--agents", type=int, default=4)
    gen.add_argument("-m", "--projects", type=int, default=2)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--epsilon", type=float, default=0.1, help="Bonus of example1")
    gen.add_argument("--universe", type=int, help="Universe size of random-coverage (default 2N)")
    gen.add_argument("--max-clauses", type=int, help="Largest clause count of random-xos (default 4)")
    _add_out(gen)
    gen.set_defaults(handler=cmd_gen)

    opt = commands.add_parser("opt", help="Compute the optimal welfare by brute force")
    _add_instance(opt)
    _add_out(opt)
    opt.set_defaults(handler=cmd_opt)

    lp = commands.add_parser("lp", help="Solve the dual of the configuration LP")
    _add_instance(lp)
    _add_out(lp)
    lp.set_defaults(handler=cmd_lp)

    solve_cmd = commands.add_parser("solve", help="Compute a stable solution")
    _add_instance(solve_cmd)
    solve_cmd.add_argument(
        "--method", choices=[m.value for m in Method if m != Method.stabilize], required=True
    )
    solve_cmd.add_argument("--epsilon", type=float, default=None)
    _add_input_alloc(solve_cmd)
    _add_out(solve_cmd)
    solve_cmd.set_defaults(handler=cmd_solve)

    stab = commands.add_parser("stabilize", help="Stabilize an allocation with the LP dual")
    _add_instance(stab)
    _add_input_alloc(stab)
    _add_out(stab)
    stab.set_defaults(handler=cmd_stabilize)

    ver = commands.add_parser("verify", help="Verify the stability of a solution")
    _add_instance(ver)
    ver.add_argument("-s", "--solution", type=Path, required=True)
    ver.add_argument("--alpha", type=float, default=1.0)
    ver.add_argument("--tolerance", type=float, default=None, help="Comparison tolerance")
    _add_out(ver)
    ver.set_defaults(handler=cmd_verify)

    lower = commands.add_parser("lower-bound", help="Smallest budget factor of any stable solution")
    _add_instance(lower)
    _add_out(lower)
    lower.set_defaults(handler=cmd_lower_bound)

    auction = commands.add_parser("auction", help="Second-price item auctions")
    auction_commands = auction.add_subparsers(dest="auction_command", required=True)
    flip = auction_commands.add_parser("flip", help="Turn a solution into bids")
    _add_instance(flip)
    flip.add_argument("-s", "--solution", type=Path, required=True)
    _add_out(flip)
    flip.set_defaults(handler=cmd_auction_flip)
    averify = auction_commands.add_parser("verify", help="Verify an equilibrium")
    _add_instance(averify)
    averify.add_argument("-b", "--bids", type=Path, required=True)
    averify.add_argument("--alpha", type=float, default=1.0)
    _add_out(averify)
    averify.set_defaults(handler=cmd_auction_verify)
    approx = auction_commands.add_parser("approx-ne", help="Construct an approximate equilibrium")
    _add_instance(approx)
    approx.add_argument("--method", choices=["anonymous", "submodular"], required=True)
    approx.add_argument("--epsilon", type=float, default=None)
    _add_out(approx)
    approx.set_defaults(handler=cmd_auction_approx_ne)

    bench_cmd = commands.add_parser("bench", help="Benchmark a method on random instances")
    bench_cmd.add_argument("--family", choices=[f.value for f in Family], required=True)
    bench_cmd.add_argument("--method", choices=[m.value for m in Method], required=True)
    bench_cmd.add_argument("-n", "--agents", type=int, default=6)
    bench_cmd.add_argument("-m", "--projects", type=int, default=2)
    bench_cmd.add_argument("--seeds", type=int, default=10, help="Number of seeds")
    bench_cmd.add_argument("--seed-start", type=int, default=0)
    bench_cmd.add_argument("--epsilon", type=float, default=None)
    _add_out(bench_cmd)
    bench_cmd.set_defaults(handler=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        format="%(asctime)s %(levelname)-8s %(message)s",
        level=logging.DEBUG if args.verbose else logging.INFO,
        datefmt="%Y-%m-%d %H:%M:%S",
        stream=sys.stderr,
    )
    try:
        return args.handler(args)
    except (InternalInvariantError, NotAnEquilibriumError) as e:
        logging.error(str(e))
        return EXIT_VERIFICATION_FAILED
    except (CoalitionCoreException, ValueError) as e:
        logging.error(str(e))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
