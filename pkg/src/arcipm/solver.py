"""Solver driver: configuration, termination, iteration log and the main loop.

Four methods share the same building blocks:

``ii-arc``   inexact (CG) directions, first and second derivative, arc update
``ii-line``  inexact (CG) first derivative only, line update ``x - dx sin(a)``
``ei-arc``   exact (Cholesky) directions on the arc, see :mod:`arcipm.exact`
``ei-line``  exact Mehrotra predictor-corrector, see :mod:`arcipm.exact`

The two ``ii-*`` methods start from ``1e4 (e, 0, e)`` and only accept steps
that keep the iterate in the neighbourhood conditions of
:func:`arcipm.arc_step.select_step`.
"""

from __future__ import annotations

import csv
import enum
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .arc_step import StepTooSmall, neighborhood_membership, select_step
from .linalg import SolverFailure
from .lp_model import Iterate, StandardFormLP, initial_point, make_iterate
from .newton_system import BasisSelection, DirectionPair, compute_directions, select_basis

__all__ = [
    "METHODS",
    "Status",
    "SolverConfig",
    "IterationRecord",
    "SolveResult",
    "check_termination",
    "relative_optimality",
    "solve",
    "write_log",
    "LOG_FIELDS",
]

log = logging.getLogger(__name__)

METHODS = ("ii-arc", "ii-line", "ei-arc", "ei-line")
LOG_FIELDS = (
    "k", "mu", "rb_norm", "rc_norm", "alpha", "nu", "cg1_iters", "cg1_res",
    "cg2_iters", "cg2_res", "skipped", "zeroed", "ms",
)


class Status(str, enum.Enum):
    ZETA_OPTIMAL = "ZetaOptimal"
    RELATIVE_OPTIMAL = "RelativeOptimal"
    STEP_TOO_SMALL = "StepTooSmall"
    ITERATION_CAP = "IterationCap"
    SOLVER_FAILURE = "SolverFailure"
    TIME_LIMIT = "TimeLimit"

    @property
    def optimal(self) -> bool:
        return self in (Status.ZETA_OPTIMAL, Status.RELATIVE_OPTIMAL)

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of one solve.

    ``backend=None`` picks the method's own backend (CG for ``ii-*``,
    Cholesky for ``ei-*``).  ``zeta_gate`` controls when the zeta-optimal
    set ends a run: ``"stall"`` reports ZetaOptimal only when the run would
    otherwise stop unconverged (step floor, iteration cap, time limit);
    ``"eager"`` stops as soon as the iterate is zeta-optimal.
    """

    sigma: float = 0.4
    eta: float = 0.3
    gamma1: float = 0.1
    gamma2: float = 1.0
    beta: float = 0.9
    zeta: float = 1e-2
    eps: float = 1e-7
    alpha_floor: float = 1e-7
    max_iterations: int = 500
    backend: str | None = None
    mode: str = "NES"
    method: str = "ii-arc"
    initial_scale: float = 1e4
    time_limit: float | None = None
    zeta_gate: str = "stall"
    check_parameters: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.backend not in (None, "cg", "cholesky"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.mode not in ("NES", "MNES"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.zeta_gate not in ("stall", "eager"):
            raise ValueError(f"unknown zeta_gate {self.zeta_gate!r}")
        if not 0 < self.sigma <= 1:
            raise ValueError("sigma must lie in (0, 1]")
        if not 0 <= self.eta < 1:
            raise ValueError("eta must lie in [0, 1)")
        if not 0 < self.gamma1 < 1:
            raise ValueError("gamma1 must lie in (0, 1)")
        if not self.gamma2 >= 1:
            raise ValueError("gamma2 must be >= 1")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if self.zeta <= 0 or self.eps <= 0 or self.alpha_floor <= 0:
            raise ValueError("zeta, eps and alpha_floor must be positive")
        if self.max_iterations < 0 or self.initial_scale <= 0:
            raise ValueError("max_iterations must be >= 0 and initial_scale > 0")
        if self.check_parameters and self.method.startswith("ii"):
            if (1 - self.gamma1) * self.sigma - (1 + self.gamma1) * self.eta <= 0:
                raise ValueError("need (1 - gamma1) sigma - (1 + gamma1) eta > 0")
            if not self.beta > self.sigma + self.eta:
                raise ValueError("need beta > sigma + eta")

    @property
    def effective_backend(self) -> str:
        if self.backend is not None:
            return self.backend
        return "cholesky" if self.method.startswith("ei") else "cg"

    @property
    def uses_arc(self) -> bool:
        return self.method.endswith("arc")


@dataclass
class IterationRecord:
    """One line of the iteration log.

    Record ``k`` describes iterate ``k`` and the step taken from it; the last
    record (the terminal iterate) has no step, so ``alpha`` and the CG
    fields are ``None``.  ``nu`` is the product of ``1 - sin(alpha_i)`` over
    the steps *before* iterate ``k``.
    """

    k: int
    mu: float
    rb_norm: float
    rc_norm: float
    alpha: float | None = None
    nu: float = 1.0
    cg1_iters: int | None = None
    cg1_res: float | None = None
    cg2_iters: int | None = None
    cg2_res: float | None = None
    skipped: bool = False
    zeroed: bool = False
    ms: float = 0.0
    # diagnostics kept in memory only (not part of the serialised log)
    nes1_res: float | None = field(default=None, repr=False)
    nes2_res: float | None = field(default=None, repr=False)
    regularized: bool = field(default=False, repr=False)
    extra: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in LOG_FIELDS}


@dataclass(eq=False)
class SolveResult:
    status: Status
    iterate: Iterate
    lp: StandardFormLP
    log: list[IterationRecord]
    method: str = "ii-arc"
    message: str = ""
    iterates: list[Iterate] | None = None
    wall_time: float = 0.0
    initial_ratio: float = math.nan

    @property
    def iterations(self) -> int:
        """Number of steps taken."""
        return sum(1 for r in self.log if r.alpha is not None)

    @property
    def x(self) -> np.ndarray:
        """Primal solution in the variables of the original model."""
        return self.lp.original_x(self.iterate.x)

    @property
    def objective(self) -> float:
        return self.lp.original_objective(self.iterate.x)


def relative_optimality(lp: StandardFormLP, it: Iterate) -> float:
    """The relative residual/gap measure compared against ``eps``."""
    rb = np.linalg.norm(it.rb) / max(1.0, float(np.linalg.norm(lp.b)))
    rc = np.linalg.norm(it.rc) / max(1.0, float(np.linalg.norm(lp.c)))
    gap = it.mu / max(1.0, abs(float(lp.c @ it.x)), abs(float(lp.b @ it.y)))
    return float(max(rb, rc, gap))


def _zeta_optimal(it: Iterate, cfg: SolverConfig) -> bool:
    return bool(np.all(it.x >= 0) and np.all(it.s >= 0)
                and it.mu <= cfg.zeta and it.residual_norm <= cfg.zeta)


def check_termination(lp: StandardFormLP, it: Iterate, cfg: SolverConfig, k: int,
                      last_alpha: float | None = None, timed_out: bool = False) -> Status | None:
    """Status to stop with, or ``None`` to continue.

    The relative criterion always wins.  A zeta-optimal iterate ends the run
    immediately with ``zeta_gate="eager"``; with ``"stall"`` it only turns a
    step-floor, iteration-cap or time-limit exit into ZetaOptimal.
    """
    if relative_optimality(lp, it) < cfg.eps:
        return Status.RELATIVE_OPTIMAL
    zeta_ok = _zeta_optimal(it, cfg)
    if zeta_ok and cfg.zeta_gate == "eager":
        return Status.ZETA_OPTIMAL
    if last_alpha is not None and last_alpha < cfg.alpha_floor:
        stop = Status.STEP_TOO_SMALL
    elif k >= cfg.max_iterations:
        stop = Status.ITERATION_CAP
    elif timed_out:
        stop = Status.TIME_LIMIT
    else:
        return None
    return Status.ZETA_OPTIMAL if zeta_ok else stop


def _final_record(k: int, it: Iterate, nu: float) -> IterationRecord:
    return IterationRecord(
        k=k, mu=it.mu, rb_norm=float(np.linalg.norm(it.rb)),
        rc_norm=float(np.linalg.norm(it.rc)), nu=nu,
    )


def _inexact_loop(lp: StandardFormLP, cfg: SolverConfig, record_iterates: bool) -> SolveResult:
    start = time.perf_counter()
    deadline = None if cfg.time_limit is None else start + cfg.time_limit
    backend = cfg.effective_backend
    it = initial_point(lp, cfg.initial_scale)
    initial_ratio = it.residual_norm / it.mu
    basis: BasisSelection | None = None
    if cfg.mode == "MNES" and backend == "cg":
        basis = select_basis(lp.A)
    nu = 1.0
    records: list[IterationRecord] = []
    iterates = [it] if record_iterates else None
    last_alpha = None
    message = ""
    k = 0
    while True:
        timed_out = deadline is not None and time.perf_counter() > deadline
        status = check_termination(lp, it, cfg, k, last_alpha, timed_out)
        if status is not None:
            break
        t0 = time.perf_counter()
        try:
            dirs: DirectionPair = compute_directions(
                lp, it, cfg.sigma, cfg.eta, backend=backend, mode=cfg.mode,
                second=cfg.uses_arc, basis=basis,
            )
        except (SolverFailure, np.linalg.LinAlgError, ValueError) as exc:
            status, message = Status.SOLVER_FAILURE, str(exc)
            break
        try:
            ev = select_step(it, dirs, cfg.gamma1, cfg.beta, floor=cfg.alpha_floor)
        except StepTooSmall as exc:
            last_alpha = exc.last_alpha
            message = str(exc)
            continue
        rec = IterationRecord(
            k=k, mu=it.mu, rb_norm=float(np.linalg.norm(it.rb)),
            rc_norm=float(np.linalg.norm(it.rc)), alpha=ev.alpha, nu=nu,
        )
        f, sec = dirs.first, dirs.second
        if f.report is not None:
            rec.cg1_iters, rec.cg1_res = f.report.iterations, f.report.residual
            rec.regularized = f.report.regularized
        rec.nes1_res = f.residual
        if sec is not None:
            rec.skipped, rec.zeroed = sec.skipped, sec.zeroed
            rec.nes2_res = sec.residual
            if sec.report is not None:
                rec.cg2_iters, rec.cg2_res = sec.report.iterations, sec.report.residual
                rec.regularized |= sec.report.regularized
        rec.ms = 1e3 * (time.perf_counter() - t0)
        records.append(rec)
        it = make_iterate(lp, ev.x, ev.y, ev.s)
        nu *= 1.0 - math.sin(ev.alpha)
        k += 1
        last_alpha = ev.alpha
        if iterates is not None:
            iterates.append(it)
    records.append(_final_record(k, it, nu))
    return SolveResult(
        status=status, iterate=it, lp=lp, log=records, method=cfg.method,
        message=message, iterates=iterates, wall_time=time.perf_counter() - start,
        initial_ratio=initial_ratio,
    )


def solve(lp: StandardFormLP, config: SolverConfig | None = None, *,
          record_iterates: bool = False, **overrides) -> SolveResult:
    """Solve a preprocessed standard-form LP with the configured method.

    Keyword ``overrides`` replace fields of ``config`` (or of the defaults).
    ``record_iterates`` keeps every accepted iterate on the result.
    """
    cfg = config or SolverConfig()
    if overrides:
        cfg = SolverConfig(**{**asdict(cfg), **overrides})
    if cfg.method.startswith("ii"):
        result = _inexact_loop(lp, cfg, record_iterates)
    else:
        from .exact import exact_loop

        result = exact_loop(lp, cfg, record_iterates)
    log.debug("%s on %s: %s after %d iterations", cfg.method, lp.name, result.status, result.iterations)
    return result


def in_neighborhood(result: SolveResult, cfg: SolverConfig) -> list[bool]:
    """Neighbourhood membership of every recorded iterate of ``result``."""
    if result.iterates is None:
        raise ValueError("solve with record_iterates=True to check the trace")
    return [neighborhood_membership(it, cfg.gamma1, cfg.gamma2, result.initial_ratio)
            for it in result.iterates]


def write_log(records: list[IterationRecord], path: str | Path) -> None:
    """Write the iteration log as CSV (``.csv``) or JSON lines (anything else)."""
    path = Path(path)
    rows = [r.to_dict() for r in records]
    if path.suffix == ".csv":
        with path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
            writer.writeheader()
            for row in rows:
                writer.writerow({k: ("" if v is None else v) for k, v in row.items()})
        return
    with path.open("w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def read_log(path: str | Path) -> list[dict]:
    path = Path(path)
    if path.suffix == ".csv":
        with path.open(newline="") as fh:
            return list(csv.DictReader(fh))
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]

