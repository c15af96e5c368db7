"""Exact-direction baselines: ``ei-arc`` and the Mehrotra line search ``ei-line``.

Both factor ``M = A D^2 A^T`` once per iteration (dense Cholesky) and reuse
the factor for every right-hand side of that iteration.  Neither keeps the
iterates in a neighbourhood; steps are a fraction of the distance to the
boundary of the positive orthant.
"""

from __future__ import annotations

import math
import time

import numpy as np

from .linalg import SolverFailure, cholesky_solve
from .lp_model import Iterate, StandardFormLP, make_iterate
from .newton_system import (
    DirectionPair,
    NewtonSystem,
    solve_complementarity_rhs,
    solve_first_direction,
    solve_second_direction,
)

__all__ = [
    "STEP_FRACTION",
    "mehrotra_start",
    "lustig_start",
    "exact_initial_point",
    "max_line_step",
    "max_arc_angle",
    "ei_arc_directions",
    "exact_loop",
]

STEP_FRACTION = 0.99


def _positive_shift(v: np.ndarray) -> float:
    return max(-1.5 * float(np.min(v)), 0.0)


def mehrotra_start(lp: StandardFormLP) -> Iterate:
    """Least-norm primal/dual point shifted into the interior."""
    A = lp.A
    AAt = (A @ A.T).toarray()
    x = A.T @ cholesky_solve(AAt, lp.b)
    y = cholesky_solve(AAt, A @ lp.c)
    s = lp.c - A.T @ y
    x = x + _positive_shift(x)
    s = s + _positive_shift(s)
    xs = float(x @ s)
    if xs > 0:
        x, s = x + 0.5 * xs / s.sum(), s + 0.5 * xs / x.sum()
    # a fully zero side (e.g. b = 0) still has to start strictly inside
    x = np.maximum(x, 1e-4 * max(1.0, float(np.max(x))))
    s = np.maximum(s, 1e-4 * max(1.0, float(np.max(s))))
    return make_iterate(lp, x, y, s)


def lustig_start(lp: StandardFormLP) -> Iterate:
    """Zero dual start with the primal least-norm point pushed off the bounds."""
    A = lp.A
    x = A.T @ cholesky_solve((A @ A.T).toarray(), lp.b)
    cnorm = float(np.abs(lp.c).sum()) / lp.n
    x = np.maximum(x, max(1.0, float(np.abs(x).max())) * 1e-2 + 1.0)
    s = np.maximum(lp.c, 0.0) + 1.0 + cnorm
    return make_iterate(lp, x, np.zeros(lp.m), s)


def exact_initial_point(lp: StandardFormLP) -> Iterate:
    """The candidate with the smaller duality measure."""
    cands = []
    for build in (mehrotra_start, lustig_start):
        try:
            cands.append(build(lp))
        except SolverFailure:
            continue
    if not cands:
        raise SolverFailure("could not build an initial point (A A^T singular)")
    return min(cands, key=lambda it: it.mu)


def max_line_step(v: np.ndarray, dv: np.ndarray) -> float:
    """Largest ``t`` with ``v - t dv >= 0`` (``inf`` if unbounded)."""
    mask = dv > 0
    if not np.any(mask):
        return math.inf
    return float(np.min(v[mask] / dv[mask]))


def max_arc_angle(v: np.ndarray, dv: np.ndarray, ddv: np.ndarray) -> float:
    """First angle in ``(0, pi/2]`` where ``v - dv sin a + ddv (1 - cos a)`` hits zero.

    Returns ``pi/2`` when every component stays positive on the quarter arc.
    Each component's roots solve ``R sin(a + phi) = v + ddv``.
    """
    rhs = v + ddv
    R = np.hypot(dv, ddv)
    phi = np.arctan2(ddv, dv)
    hit = (R > 0) & (np.abs(rhs) <= R)
    if not np.any(hit):
        return math.pi / 2
    t = np.arcsin(np.clip(rhs[hit] / R[hit], -1.0, 1.0))
    two_pi = 2.0 * math.pi
    roots = np.stack([np.mod(t - phi[hit], two_pi), np.mod(math.pi - t - phi[hit], two_pi)])
    roots[roots <= 0] = math.inf
    return float(min(math.pi / 2, roots.min()))


def _arc_angle(it: Iterate, dirs: DirectionPair) -> float:
    f, sec = dirs.first, dirs.second
    return min(max_arc_angle(it.x, f.dx, sec.ddx), max_arc_angle(it.s, f.ds, sec.dds))


def _arc_mu(it: Iterate, dirs: DirectionPair, alpha: float) -> float:
    f, sec = dirs.first, dirs.second
    sa, omc = math.sin(alpha), 1.0 - math.cos(alpha)
    x = it.x - f.dx * sa + sec.ddx * omc
    s = it.s - f.ds * sa + sec.dds * omc
    return float(x @ s) / x.size


def ei_arc_directions(lp: StandardFormLP, it: Iterate, sigma: float,
                      system: NewtonSystem | None = None) -> DirectionPair:
    """Exact first and second derivatives for a given centering ``sigma``."""
    if system is None:
        system = NewtonSystem(lp, it, backend="cholesky")
    first = solve_first_direction(lp, it, sigma, system=system)
    return DirectionPair(first, solve_second_direction(lp, it, first, system=system))


def _ei_arc_step(lp, it, cfg, system):
    # predictor arc with sigma = 0 picks the centering for the real arc
    aff = ei_arc_directions(lp, it, 0.0, system)
    mu_aff = _arc_mu(it, aff, _arc_angle(it, aff))
    sigma = min(cfg.sigma, (max(mu_aff, 0.0) / it.mu) ** 3)
    dirs = ei_arc_directions(lp, it, sigma, system)
    alpha = min(math.pi / 2, STEP_FRACTION * _arc_angle(it, dirs))
    f, sec = dirs.first, dirs.second
    sa, omc = math.sin(alpha), 1.0 - math.cos(alpha)
    x = it.x - f.dx * sa + sec.ddx * omc
    y = it.y - f.dy * sa + sec.ddy * omc
    s = it.s - f.ds * sa + sec.dds * omc
    return alpha, (x, y, s), dirs


def _ei_line_step(lp, it, cfg, system):
    xs = it.x * it.s
    aff = solve_complementarity_rhs(lp, it, xs, system)
    ap = min(1.0, max_line_step(it.x, aff.dx))
    ad = min(1.0, max_line_step(it.s, aff.ds))
    mu_aff = float((it.x - ap * aff.dx) @ (it.s - ad * aff.ds)) / lp.n
    sigma = (max(mu_aff, 0.0) / it.mu) ** 3
    corr = solve_complementarity_rhs(lp, it, xs - sigma * it.mu + aff.dx * aff.ds, system)
    ap = min(1.0, STEP_FRACTION * max_line_step(it.x, corr.dx))
    ad = min(1.0, STEP_FRACTION * max_line_step(it.s, corr.ds))
    point = (it.x - ap * corr.dx, it.y - ad * corr.dy, it.s - ad * corr.ds)
    # logged as the angle whose sine is the shorter of the two steps
    return math.asin(min(ap, ad)), point, DirectionPair(corr)


def exact_loop(lp: StandardFormLP, cfg, record_iterates: bool = False):
    from .solver import IterationRecord, SolveResult, Status, _final_record, check_termination

    start = time.perf_counter()
    deadline = None if cfg.time_limit is None else start + cfg.time_limit
    step = _ei_arc_step if cfg.method == "ei-arc" else _ei_line_step
    records: list[IterationRecord] = []
    message = ""
    try:
        it = exact_initial_point(lp)
    except (SolverFailure, np.linalg.LinAlgError) as exc:
        raise SolverFailure(str(exc)) from exc
    initial_ratio = it.residual_norm / it.mu
    iterates = [it] if record_iterates else None
    nu, k, last_alpha = 1.0, 0, None
    while True:
        timed_out = deadline is not None and time.perf_counter() > deadline
        status = check_termination(lp, it, cfg, k, last_alpha, timed_out)
        if status is not None:
            break
        t0 = time.perf_counter()
        try:
            system = NewtonSystem(lp, it, backend="cholesky")
            alpha, point, dirs = step(lp, it, cfg, system)
        except (SolverFailure, np.linalg.LinAlgError, ValueError) as exc:
            status, message = Status.SOLVER_FAILURE, str(exc)
            break
        if not all(np.all(np.isfinite(v)) for v in point):
            status, message = Status.SOLVER_FAILURE, "non-finite iterate"
            break
        last_alpha = alpha
        if alpha < cfg.alpha_floor:
            continue
        rec = IterationRecord(
            k=k, mu=it.mu, rb_norm=float(np.linalg.norm(it.rb)),
            rc_norm=float(np.linalg.norm(it.rc)), alpha=alpha, nu=nu,
        )
        f, sec = dirs.first, dirs.second
        if f.report is not None:
            rec.cg1_iters, rec.cg1_res = f.report.iterations, f.report.residual
        rec.nes1_res = f.residual
        rec.regularized = system._factor is not None and system._factor.regularized
        if sec is not None:
            rec.skipped, rec.zeroed, rec.nes2_res = sec.skipped, sec.zeroed, sec.residual
            if sec.report is not None:
                rec.cg2_iters, rec.cg2_res = sec.report.iterations, sec.report.residual
        rec.ms = 1e3 * (time.perf_counter() - t0)
        records.append(rec)
        it = make_iterate(lp, *point)
        nu *= 1.0 - math.sin(alpha)
        k += 1
        if iterates is not None:
            iterates.append(it)
    records.append(_final_record(k, it, nu))
    return SolveResult(
        status=status, iterate=it, lp=lp, log=records, method=cfg.method, message=message,
        iterates=iterates, wall_time=time.perf_counter() - start, initial_ratio=initial_ratio,
    )
