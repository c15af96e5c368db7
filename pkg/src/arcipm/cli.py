"""Command-line interface: ``arcipm solve | bench | profile``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .bench import EmptyProfileError, emit_reports, performance_profile, read_results, run_suite, write_profile
from .linalg import SolverFailure
from .lp_model import LPModelError, load_problem
from .mps import MPSError
from .solver import METHODS, SolverConfig, Status, solve, write_log

EXIT_OK = 0
EXIT_SOLVER_FAILURE = 1
EXIT_STEP_TOO_SMALL = 2
EXIT_ITERATION_CAP = 3
EXIT_TIMEOUT = 4
EXIT_INPUT_ERROR = 5

STATUS_EXIT = {
    Status.RELATIVE_OPTIMAL: EXIT_OK,
    Status.ZETA_OPTIMAL: EXIT_OK,
    Status.STEP_TOO_SMALL: EXIT_STEP_TOO_SMALL,
    Status.ITERATION_CAP: EXIT_ITERATION_CAP,
    Status.TIME_LIMIT: EXIT_TIMEOUT,
    Status.SOLVER_FAILURE: EXIT_SOLVER_FAILURE,
}

# flag -> SolverConfig field
PARAM_FLAGS = {
    "sigma": "sigma", "eta": "eta", "gamma1": "gamma1", "gamma2": "gamma2",
    "beta": "beta", "zeta": "zeta", "eps": "eps", "backend": "backend",
    "mode": "mode", "max_iter": "max_iterations", "alpha_floor": "alpha_floor",
    "zeta_gate": "zeta_gate",
}


def _add_params(p: argparse.ArgumentParser) -> None:
    for name in ("sigma", "eta", "gamma1", "gamma2", "beta", "zeta", "eps", "alpha_floor"):
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=float)
    p.add_argument("--backend", choices=("cg", "cholesky"))
    p.add_argument("--mode", choices=("NES", "MNES"))
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--zeta-gate", dest="zeta_gate", choices=("stall", "eager"))


def _overrides(args) -> dict:
    return {field: getattr(args, flag) for flag, field in PARAM_FLAGS.items()
            if getattr(args, flag, None) is not None}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arcipm", description="Arc-search interior-point LP solver")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one LP (MPS or triple format)")
    p.add_argument("file")
    p.add_argument("--method", choices=METHODS, default="ii-arc")
    _add_params(p)
    p.add_argument("--time-limit", dest="time_limit", type=float)
    p.add_argument("--log", dest="log_path", help="iteration log (.csv, otherwise JSON lines)")

    p = sub.add_parser("bench", help="run every method on every problem of a directory")
    p.add_argument("dir")
    p.add_argument("--methods", default=",".join(METHODS), help="comma-separated list")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--time-limit", dest="time_limit", type=float, default=3600.0)
    _add_params(p)

    p = sub.add_parser("profile", help="performance profile from a results.csv")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--metric", choices=("iterations", "time"), default="iterations")
    p.add_argument("--out", required=True)
    return parser


def _cmd_solve(args) -> int:
    try:
        cfg = SolverConfig(method=args.method, time_limit=args.time_limit, **_overrides(args))
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    try:
        lp = load_problem(args.file)
    except (MPSError, LPModelError, OSError, UnicodeDecodeError) as exc:
        print(f"error: {args.file}: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    try:
        res = solve(lp, cfg)
    except SolverFailure as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER_FAILURE
    if args.log_path:
        write_log(res.log, args.log_path)
    print(f"problem     {lp.name or Path(args.file).name}  (m={lp.m}, n={lp.n})")
    print(f"method      {cfg.method}")
    print(f"status      {res.status}")
    print(f"iterations  {res.iterations}")
    print(f"objective   {res.objective:.12g}")
    print(f"mu          {res.iterate.mu:.3e}")
    print(f"residual    {res.iterate.residual_norm:.3e}")
    print(f"time (s)    {res.wall_time:.3f}")
    if res.message:
        print(f"note        {res.message}")
    return STATUS_EXIT[res.status]


def _cmd_bench(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        rows = run_suite(args.dir, methods, _overrides(args), args.time_limit, args.jobs,
                         out_csv=out / "results.csv")
        if not rows:
            print(f"error: no problem files in {args.dir}", file=sys.stderr)
            return EXIT_INPUT_ERROR
        emit_reports(rows, out)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    for r in rows:
        print(f"{r.problem}\t{r.method}\t{r.status}\t{r.iterations}\t{r.time:.3f}")
    return EXIT_OK


def _cmd_profile(args) -> int:
    try:
        rows = read_results(args.inp)
        curves = performance_profile(rows, args.metric)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_profile(curves, out / f"profile_{args.metric}.tsv")
    except (EmptyProfileError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    for c in curves:
        print(f"{c.method}\tbest={c.at(1.0):.3f}\tsolved={c.solve_rate:.3f}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"solve": _cmd_solve, "bench": _cmd_bench, "profile": _cmd_profile}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
