"""Benchmark suites, Dolan-More performance profiles and the report files.

``results.csv`` has one row per (problem, method).  Profiles compare a metric
(iterations or wall time) against the best successful method on each
problem; a failed run has ratio ``inf``.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .lp_model import LPModelError, load_problem
from .mps import MPSError
from .solver import METHODS, SolverConfig, Status, solve

__all__ = [
    "PARSE_FAILURE",
    "INPUT_ERROR",
    "SUCCESS_STATUSES",
    "GRID_POINTS",
    "BenchmarkRow",
    "ProfileCurve",
    "EmptyProfileError",
    "problem_files",
    "run_one",
    "run_suite",
    "performance_profile",
    "profile_grid",
    "write_results",
    "read_results",
    "write_profile",
    "summary_markdown",
    "emit_reports",
]

log = logging.getLogger(__name__)

PARSE_FAILURE = "ParseFailure"
INPUT_ERROR = "InputError"
SUCCESS_STATUSES = frozenset({Status.RELATIVE_OPTIMAL.value, Status.ZETA_OPTIMAL.value})
GRID_POINTS = 256
PROBLEM_SUFFIXES = (".mps", ".mps.gz", ".qps", ".coo", ".tri")


@dataclass(frozen=True)
class BenchmarkRow:
    problem: str
    n: int
    m: int
    method: str
    iterations: int
    time: float
    status: str
    objective: float = math.nan

    @property
    def solved(self) -> bool:
        return self.status in SUCCESS_STATUSES

    def metric(self, name: str) -> float:
        if name == "iterations":
            return float(self.iterations)
        if name == "time":
            return self.time
        raise ValueError(f"unknown metric {name!r}; use 'iterations' or 'time'")


FIELDNAMES = tuple(f.name for f in fields(BenchmarkRow))


class EmptyProfileError(ValueError):
    """No method solved any problem, so there is no best metric to compare to."""


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------


def problem_files(problem_dir: str | Path) -> list[Path]:
    root = Path(problem_dir)
    if not root.is_dir():
        raise NotADirectoryError(f"{root} is not a directory")
    out = [p for p in root.iterdir() if p.is_file() and p.name.lower().endswith(PROBLEM_SUFFIXES)]
    return sorted(out, key=lambda p: p.name)


def _problem_name(path: Path) -> str:
    name = path.name
    for suffix in sorted(PROBLEM_SUFFIXES, key=len, reverse=True):
        if name.lower().endswith(suffix):
            return name[: -len(suffix)]
    return name


def run_one(path: str | Path, method: str, overrides: dict | None = None,
            time_limit: float | None = 3600.0) -> BenchmarkRow:
    """Load and solve one problem with one method; never raises for bad input."""
    path = Path(path)
    name = _problem_name(path)
    try:
        lp = load_problem(path)
    except (MPSError, OSError, UnicodeDecodeError) as exc:
        log.warning("%s: %s", path, exc)
        return BenchmarkRow(name, 0, 0, method, 0, 0.0, PARSE_FAILURE)
    except LPModelError as exc:
        log.warning("%s: %s", path, exc)
        return BenchmarkRow(name, 0, 0, method, 0, 0.0, INPUT_ERROR)
    cfg = SolverConfig(**{**(overrides or {}), "method": method, "time_limit": time_limit})
    try:
        res = solve(lp, cfg)
    except Exception as exc:  # a crashed cell must not take the suite down
        log.warning("%s/%s crashed: %s", name, method, exc)
        return BenchmarkRow(name, lp.n, lp.m, method, 0, 0.0, Status.SOLVER_FAILURE.value)
    return BenchmarkRow(name, lp.n, lp.m, method, res.iterations, res.wall_time,
                        res.status.value, res.objective)


def _run_cell(args):
    return run_one(*args)


def run_suite(problem_dir: str | Path, methods: Sequence[str] = METHODS,
              overrides: dict | None = None, time_limit: float | None = 3600.0,
              jobs: int = 1, out_csv: str | Path | None = None) -> list[BenchmarkRow]:
    """Every method on every problem file of ``problem_dir``.

    With ``out_csv`` each finished cell is appended at once, so an
    interrupted suite keeps what it has; the file is rewritten in problem
    order at the end.  ``jobs > 1`` runs cells in worker processes.
    """
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown methods {unknown}; choose from {METHODS}")
    if overrides:
        SolverConfig(**overrides)  # fail fast on bad parameters
    files = problem_files(problem_dir)
    cells = [(p, m, overrides, time_limit) for p in files for m in methods]
    rows: list[BenchmarkRow] = []
    fh = writer = None
    if out_csv is not None:
        fh = open(out_csv, "w", newline="")
        writer = csv.DictWriter(fh, fieldnames=FIELDNAMES)
        writer.writeheader()
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = pool.map(_run_cell, cells)
                for row in results:
                    rows.append(row)
                    _append(writer, fh, row)
        else:
            for cell in cells:
                row = _run_cell(cell)
                rows.append(row)
                _append(writer, fh, row)
    finally:
        if fh is not None:
            fh.close()
    order = {m: i for i, m in enumerate(methods)}
    rows.sort(key=lambda r: (r.problem, order[r.method]))
    if out_csv is not None:
        write_results(rows, out_csv)
    return rows


def _append(writer, fh, row: BenchmarkRow) -> None:
    if writer is None:
        return
    writer.writerow(_row_dict(row))
    fh.flush()


# ---------------------------------------------------------------------------
# results.csv
# ---------------------------------------------------------------------------


def _row_dict(row: BenchmarkRow) -> dict:
    d = asdict(row)
    d["time"] = repr(float(row.time))
    d["objective"] = repr(float(row.objective))
    return d


def write_results(rows: Iterable[BenchmarkRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=FIELDNAMES)
        writer.writeheader()
        for row in rows:
            writer.writerow(_row_dict(row))


def read_results(path: str | Path) -> list[BenchmarkRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(FIELDNAMES[:7]) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        return [
            BenchmarkRow(
                problem=r["problem"], n=int(r["n"]), m=int(r["m"]), method=r["method"],
                iterations=int(r["iterations"]), time=float(r["time"]), status=r["status"],
                objective=float(r.get("objective") or "nan"),
            )
            for r in reader
        ]


# ---------------------------------------------------------------------------
# profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProfileCurve:
    """Cumulative share of problems a method solves within a factor ``tau`` of the best."""

    method: str
    ratios: np.ndarray  # one per problem, inf for failures
    taus: np.ndarray
    fractions: np.ndarray

    def at(self, tau: float) -> float:
        if tau < 1:
            raise ValueError("tau must be >= 1")
        return float(np.count_nonzero(self.ratios <= tau)) / self.ratios.size

    @property
    def solve_rate(self) -> float:
        return float(np.count_nonzero(np.isfinite(self.ratios))) / self.ratios.size

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.taus.tolist(), self.fractions.tolist()))


def profile_grid(max_ratio: float, points: int = GRID_POINTS) -> np.ndarray:
    """Geometric grid from exactly 1 to exactly ``max_ratio``."""
    if not max_ratio > 1:
        return np.array([1.0])
    grid = np.geomspace(1.0, max_ratio, points)
    grid[0], grid[-1] = 1.0, max_ratio
    return grid


def performance_profile(rows: Sequence[BenchmarkRow], metric: str = "iterations",
                        methods: Sequence[str] | None = None) -> list[ProfileCurve]:
    """One curve per method over all problems appearing in ``rows``.

    A problem whose best metric is 0 gives ratio 1 to every method that also
    scored 0.

    Raises
    ------
    EmptyProfileError
        If no run in ``rows`` succeeded.
    """
    if not rows:
        raise EmptyProfileError("no benchmark rows")
    if methods is None:
        methods = list(dict.fromkeys(r.method for r in rows))
    problems = list(dict.fromkeys(r.problem for r in rows))
    value = np.full((len(problems), len(methods)), math.inf)
    pidx = {p: i for i, p in enumerate(problems)}
    midx = {m: j for j, m in enumerate(methods)}
    for r in rows:
        if r.solved and r.method in midx:
            v = r.metric(metric)
            if math.isfinite(v):
                value[pidx[r.problem], midx[r.method]] = v
    if not np.isfinite(value).any():
        raise EmptyProfileError(f"no successful run to build a {metric} profile from")
    best = value.min(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = value / best
    ratio[(value == 0) & (best == 0)] = 1.0
    ratio[~np.isfinite(value)] = math.inf
    finite = ratio[np.isfinite(ratio)]
    taus = profile_grid(float(finite.max()))
    curves = []
    for j, m in enumerate(methods):
        col = ratio[:, j]
        fr = np.array([np.count_nonzero(col <= t) for t in taus], dtype=float) / len(problems)
        curves.append(ProfileCurve(m, col.copy(), taus, fr))
    return curves


def write_profile(curves: Sequence[ProfileCurve], path: str | Path) -> None:
    """TSV with a ``tau`` column then one column per method."""
    taus = curves[0].taus
    lines = ["\t".join(["tau", *(c.method for c in curves)])]
    for i, t in enumerate(taus):
        lines.append("\t".join([f"{t:.10g}", *(f"{c.fractions[i]:.10g}" for c in curves)]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_profile(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader])
    return {name: data[:, i] for i, name in enumerate(header)}


# ---------------------------------------------------------------------------
# summary
# ---------------------------------------------------------------------------


def _cell(row: BenchmarkRow | None, metric: str, best: float) -> str:
    if row is None:
        return ""
    if row.status == Status.TIME_LIMIT.value:
        return "*"
    if not row.solved:
        return "-"
    v = row.metric(metric)
    text = str(int(v)) if metric == "iterations" else f"{v:.2f}"
    return f"<u>{text}</u>" if v == best else text


def summary_markdown(rows: Sequence[BenchmarkRow]) -> str:
    """Iterations and times per problem; the best solved entries are underlined (all ties)."""
    methods = list(dict.fromkeys(r.method for r in rows))
    problems = list(dict.fromkeys(r.problem for r in rows))
    table = {(r.problem, r.method): r for r in rows}
    head = ["problem", "n", "m", *(f"{m} iter" for m in methods), *(f"{m} time (s)" for m in methods)]
    out = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for p in problems:
        cells = [table.get((p, m)) for m in methods]
        sized = next((c for c in cells if c is not None and c.n), None)
        n, m_ = (sized.n, sized.m) if sized else (0, 0)
        line = [p, str(n), str(m_)]
        for metric in ("iterations", "time"):
            solved = [c.metric(metric) for c in cells if c is not None and c.solved]
            best = min(solved) if solved else math.nan
            line += [_cell(c, metric, best) for c in cells]
        out.append("| " + " | ".join(line) + " |")
    out.append("")
    out.append("`-` failed, `*` time limit, <u>underlined</u> best among the methods (ties all underlined).")
    out.append("")
    for m in methods:
        mine = [r for r in rows if r.method == m]
        out.append(f"- {m}: solved {sum(r.solved for r in mine)}/{len(mine)}")
    mutual = [p for p in problems if all(table.get((p, m)) is not None and table[(p, m)].solved for m in methods)]
    out.append("")
    out.append(
        f"Profiles cover all {len(problems)} problems with failures at ratio infinity; "
        f"{len(mutual)} were solved by every method."
    )
    return "\n".join(out) + "\n"


def emit_reports(rows: Sequence[BenchmarkRow], out_dir: str | Path,
                 curves: dict[str, list[ProfileCurve]] | None = None) -> list[Path]:
    """Write results.csv, profile_iterations.tsv, profile_time.tsv and summary.md.

    Profiles are skipped (with a warning) when nothing was solved.
    """
    if not rows:
        raise ValueError("no benchmark rows to report")
    out = Path(out_dir)
    if curves is None:
        curves = {}
        for metric in ("iterations", "time"):
            try:
                curves[metric] = performance_profile(rows, metric)
            except EmptyProfileError as exc:
                log.warning("%s", exc)
    os.makedirs(out, exist_ok=True)
    written = [out / "results.csv"]
    write_results(rows, written[0])
    for metric, cs in curves.items():
        path = out / f"profile_{metric}.tsv"
        write_profile(cs, path)
        written.append(path)
    path = out / "summary.md"
    path.write_text(summary_markdown(rows))
    written.append(path)
    return written
