"""Normal-equation kernels: assembly, Jacobi-preconditioned CG and dense Cholesky.

The CG tolerance is an absolute bound on the *true* residual
``||M x - rhs||_2``.  The norm reported back is always recomputed from the
returned solution, never taken from the CG recurrence.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

__all__ = [
    "REGULARIZATION",
    "CGReport",
    "CGNotConverged",
    "NumericalBreakdown",
    "SolverFailure",
    "NonPositiveDiagonal",
    "as_operator",
    "normal_matrix",
    "jacobi_preconditioner",
    "cg_solve",
    "regularize_and_retry",
    "solve_with_fallback",
    "CholeskyFactor",
    "cholesky_solve",
]

REGULARIZATION = 1e-3


class SolverFailure(RuntimeError):
    """A linear solve failed even after regularisation."""


class NumericalBreakdown(SolverFailure):
    """NaN or Inf appeared inside an iterative solve."""


class CGNotConverged(RuntimeError):
    """CG hit its iteration cap; ``report`` and ``solution`` hold the last state."""

    def __init__(self, solution: np.ndarray, report: "CGReport"):
        super().__init__(
            f"CG stopped after {report.iterations} iterations with residual "
            f"{report.residual:.3e} > tol {report.tol:.3e}"
        )
        self.solution = solution
        self.report = report


class NonPositiveDiagonal(ValueError):
    """The Jacobi preconditioner needs a strictly positive diagonal."""


@dataclass(frozen=True)
class CGReport:
    residual: float
    iterations: int
    tol: float
    regularized: bool = False
    converged: bool = True


def as_operator(M) -> Callable[[np.ndarray], np.ndarray]:
    if callable(M) and not hasattr(M, "shape"):
        return M
    if hasattr(M, "matvec"):
        return M.matvec
    return lambda v: M @ v


def normal_matrix(A: sp.spmatrix, d2: np.ndarray) -> sp.csr_matrix:
    """``A diag(d2) A^T``, stored exactly symmetric (upper triangle mirrored)."""
    d2 = np.asarray(d2, dtype=float)
    if d2.shape != (A.shape[1],):
        raise ValueError(f"scaling has shape {d2.shape}, expected ({A.shape[1]},)")
    if not np.all(d2 > 0):
        raise ValueError("normal_matrix needs a strictly positive scaling")
    A = sp.csr_matrix(A)
    M = (A @ sp.diags(d2) @ A.T).tocsr()
    upper = sp.triu(M, k=1)
    M = (sp.diags(M.diagonal()) + upper + upper.T).tocsr()
    M.eliminate_zeros()
    M.sort_indices()
    return M


def jacobi_preconditioner(M) -> np.ndarray:
    """Inverse diagonal of ``M``; raises :class:`NonPositiveDiagonal` otherwise."""
    diag = np.asarray(M.diagonal(), dtype=float)
    if not np.all(diag > 0):
        raise NonPositiveDiagonal(
            f"{int(np.sum(~(diag > 0)))} nonpositive diagonal entries; regularize first"
        )
    return 1.0 / diag


def cg_solve(M, rhs, tol: float, cap: int, precond=None) -> tuple[np.ndarray, CGReport]:
    """Preconditioned conjugate gradients from a zero start.

    Parameters
    ----------
    M : matrix or callable
        Symmetric positive definite operator.
    rhs : ndarray
    tol : float
        Absolute bound on the true residual norm ``||M x - rhs||``.
    cap : int
        Maximum number of CG iterations.
    precond : ndarray, optional
        Diagonal preconditioner (multiplies the residual elementwise).

    Returns
    -------
    x, report

    Raises
    ------
    CGNotConverged
        When ``cap`` iterations do not reach ``tol``.
    NumericalBreakdown
        When a NaN/Inf shows up.
    """
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    matvec = as_operator(M)
    b = np.asarray(rhs, dtype=float)
    if not np.all(np.isfinite(b)):
        raise NumericalBreakdown("right-hand side contains NaN/Inf")
    x = np.zeros_like(b)
    r = b.copy()  # r = rhs - M x
    true_norm = float(np.linalg.norm(r))
    if true_norm <= tol:
        return x, CGReport(true_norm, 0, tol)
    pinv = np.ones_like(b) if precond is None else np.asarray(precond, dtype=float)
    z = pinv * r
    p = z.copy()
    rz = float(r @ z)
    it = 0
    while it < cap:
        q = matvec(p)
        pq = float(p @ q)
        if not np.isfinite(pq):
            raise NumericalBreakdown(f"non-finite curvature at CG iteration {it}")
        if pq <= 0.0:
            break  # operator not positive definite along p
        step = rz / pq
        x += step * p
        r -= step * q
        it += 1
        if np.linalg.norm(r) <= tol:
            # confirm on the true residual; the recurrence drifts
            r = b - matvec(x)
            true_norm = float(np.linalg.norm(r))
            if true_norm <= tol:
                return x, CGReport(true_norm, it, tol)
            z = pinv * r
            p = z.copy()
            rz = float(r @ z)
            continue
        z = pinv * r
        rz_new = float(r @ z)
        if not np.isfinite(rz_new):
            raise NumericalBreakdown(f"non-finite residual at CG iteration {it}")
        p = z + (rz_new / rz) * p
        rz = rz_new
    if not np.all(np.isfinite(x)):
        raise NumericalBreakdown("CG iterate became non-finite")
    true_norm = float(np.linalg.norm(b - matvec(x)))
    report = CGReport(true_norm, it, tol, converged=true_norm <= tol)
    if report.converged:
        return x, report
    raise CGNotConverged(x, report)


def _shifted(M, shift: float):
    if sp.issparse(M):
        return (M + shift * sp.identity(M.shape[0], format="csr")).tocsr()
    if isinstance(M, np.ndarray):
        return M + shift * np.eye(M.shape[0])
    matvec = as_operator(M)
    return lambda v: matvec(v) + shift * v


def regularize_and_retry(M, rhs, tol: float, cap: int, precond=None) -> tuple[np.ndarray, CGReport]:
    """Solve ``(M + 1e-3 I) x = rhs`` by CG after a failed plain solve.

    ``precond`` is the inverse diagonal of the *unshifted* matrix (may be
    ``None``); the preconditioner is rebuilt for the shifted one.  Raises
    :class:`SolverFailure` if the shifted system does not converge either.
    """
    Mreg = _shifted(M, REGULARIZATION)
    if hasattr(Mreg, "diagonal"):
        diag = np.asarray(Mreg.diagonal(), dtype=float)
    elif precond is not None:
        diag = 1.0 / np.asarray(precond, dtype=float) + REGULARIZATION
    else:
        diag = None
    precond = 1.0 / diag if diag is not None and np.all(diag > 0) else None
    try:
        x, rep = cg_solve(Mreg, rhs, tol, cap, precond)
    except CGNotConverged as exc:
        raise SolverFailure(f"regularized CG failed: {exc}") from exc
    return x, CGReport(rep.residual, rep.iterations, rep.tol, regularized=True)


def solve_with_fallback(M, rhs, tol: float, cap: int | None = None) -> tuple[np.ndarray, CGReport]:
    """The driver's CG policy: Jacobi-PCG, and on failure the regularized retry.

    Both attempts get ``cap`` iterations (default ``10 m``).  The returned
    report of a regularized solve measures the residual of the shifted system.
    """
    m = len(rhs)
    cap = 10 * m if cap is None else cap
    try:
        precond = jacobi_preconditioner(M)
    except NonPositiveDiagonal:
        return regularize_and_retry(M, rhs, tol, cap, None)
    try:
        return cg_solve(M, rhs, tol, cap, precond)
    except CGNotConverged:
        return regularize_and_retry(M, rhs, tol, cap, precond)


class CholeskyFactor:
    """Dense Cholesky factorisation of an SPD matrix, reusable across right-hand sides.

    Falls back to ``M + 1e-3 I`` when the plain factorisation hits a
    nonpositive pivot; ``regularized`` records that.
    """

    def __init__(self, M, allow_regularization: bool = True):
        dense = M.toarray() if sp.issparse(M) else np.array(M, dtype=float)
        self.M = dense
        self.regularized = False
        try:
            self._cf = sla.cho_factor(dense, lower=True, check_finite=True)
        except (sla.LinAlgError, ValueError) as exc:
            if not allow_regularization:
                raise SolverFailure(f"Cholesky factorization failed: {exc}") from exc
            self.M = dense + REGULARIZATION * np.eye(dense.shape[0])
            self.regularized = True
            try:
                self._cf = sla.cho_factor(self.M, lower=True)
            except (sla.LinAlgError, ValueError) as exc2:
                raise SolverFailure(f"regularized Cholesky failed: {exc2}") from exc2

    def solve(self, rhs, refine: int = 2) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        x = sla.cho_solve(self._cf, rhs)
        # a couple of refinement sweeps keep the residual near roundoff when
        # M is badly conditioned late in a solve
        for _ in range(refine):
            r = rhs - self.M @ x
            if np.linalg.norm(r) <= 1e-14 * (1.0 + np.linalg.norm(rhs)):
                break
            x = x + sla.cho_solve(self._cf, r)
        return x

    def residual(self, x, rhs) -> float:
        return float(np.linalg.norm(self.M @ x - rhs))


def cholesky_solve(M, rhs) -> np.ndarray:
    """One-shot exact solve of an SPD system; raises :class:`SolverFailure` on a bad pivot."""
    return CholeskyFactor(M, allow_regularization=False).solve(rhs)
