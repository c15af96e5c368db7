"""First and second derivatives of the approximate central path.

Both derivatives come from the reduced (normal-equation) form of the
perturbed Newton system

    [A  0   0] [dx]   [r_b               ]
    [0  A^T I] [dy] = [r_c               ]
    [S  0   X] [ds]   [x*s - sigma*mu*e  ]

and of the second-order system with right-hand side ``(0, 0, -2 dx*ds)``.
The reduced systems ``M dy = rho`` with ``M = A D^2 A^T`` are solved either
inexactly by CG (``backend="cg"``) or exactly by Cholesky
(``backend="cholesky"``).

In ``"NES"`` mode the CG error is left where it falls, so ``A dx = r_b + r1``.
In ``"MNES"`` mode the system is congruence-transformed by
``W = D_B^{-1} A_B^{-1}`` for a column basis ``B``; the error then lands
entirely in the complementarity row as ``S v`` with ``v`` supported on ``B``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .linalg import (
    CGReport,
    CholeskyFactor,
    SolverFailure,
    normal_matrix,
    solve_with_fallback,
)
from .lp_model import Iterate, StandardFormLP

__all__ = [
    "EXACT_TOL",
    "ScalingState",
    "BasisSelection",
    "MNESOperator",
    "FirstDerivative",
    "SecondDerivative",
    "DirectionPair",
    "NewtonSystem",
    "NormalSolve",
    "first_rhs_nes",
    "select_basis",
    "first_rhs_mnes",
    "first_from_dual",
    "second_from_dual",
    "solve_first_direction",
    "second_rhs",
    "solve_second_direction",
    "solve_complementarity_rhs",
    "compute_directions",
]

EXACT_TOL = 1e-9
DENSE_MNES_LIMIT = 200
BACKENDS = ("cg", "cholesky")
MODES = ("NES", "MNES")


@dataclass(frozen=True, eq=False)
class ScalingState:
    """Diagonal scaling ``D^2 = X S^{-1}`` at one iterate."""

    d2: np.ndarray
    d: np.ndarray
    mu: float
    x: np.ndarray
    s: np.ndarray

    @classmethod
    def from_iterate(cls, it: Iterate) -> "ScalingState":
        if not it.is_positive():
            raise ValueError("scaling needs strictly positive x and s")
        d2 = it.x / it.s
        return cls(d2=d2, d=np.sqrt(d2), mu=it.mu, x=it.x, s=it.s)


@dataclass(frozen=True, eq=False)
class BasisSelection:
    """Columns ``B`` with ``A_B`` nonsingular, plus the LU factors of ``A_B``."""

    indices: np.ndarray
    lu: tuple

    def solve(self, v: np.ndarray) -> np.ndarray:
        """``A_B^{-1} v``."""
        return sla.lu_solve(self.lu, v)

    def solve_t(self, v: np.ndarray) -> np.ndarray:
        """``A_B^{-T} v``."""
        return sla.lu_solve(self.lu, v, trans=1)


def select_basis(A) -> BasisSelection:
    """Pick ``m`` columns of ``A`` by partial-pivoted LU of ``A^T``.

    The pivot rows of ``A^T`` (columns of ``A``), in pivot order, form the
    basis; pivoting is value driven, so relabelling columns relabels the basis.
    """
    dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    m, n = dense.shape
    P, _, U = sla.lu(dense.T)
    order = np.argmax(P, axis=0)  # (P^T A^T)[k] = A^T[order[k]]
    piv = np.abs(np.diag(U))
    if piv.size < m or piv.max(initial=0.0) == 0.0 or np.min(piv) <= 1e-10 * np.max(piv):
        raise ValueError("A is numerically rank deficient; preprocess the problem first")
    idx = np.array(order[:m], dtype=int)
    lu = sla.lu_factor(dense[:, idx])
    return BasisSelection(indices=idx, lu=lu)


class MNESOperator:
    """``M_hat = W M W^T`` with ``W = D_B^{-1} A_B^{-1}``, applied by composition."""

    def __init__(self, M, basis: BasisSelection, scaling: ScalingState):
        self.M = M
        self.basis = basis
        self.dB = scaling.d[basis.indices]
        self.shape = M.shape
        self._dense = None

    def W(self, v: np.ndarray) -> np.ndarray:
        return self.basis.solve(v) / self.dB

    def Wt(self, z: np.ndarray) -> np.ndarray:
        return self.basis.solve_t(z / self.dB)

    def matvec(self, z: np.ndarray) -> np.ndarray:
        if self._dense is not None:
            return self._dense @ z
        return self.W(self.M @ self.Wt(z))

    def dense(self) -> np.ndarray:
        m = self.shape[0]
        cols = [self.W(self.M @ self.Wt(e)) for e in np.eye(m)]
        Mh = np.column_stack(cols)
        return 0.5 * (Mh + Mh.T)

    def diagonal(self) -> np.ndarray:
        if self._dense is None:
            self._dense = self.dense()
        return np.diag(self._dense).copy()


def first_rhs_nes(lp: StandardFormLP, it: Iterate, sigma: float) -> np.ndarray:
    """``rho1 = A D^2 r_c + r_b - A S^{-1}(x*s - sigma*mu*e)``.

    Evaluated as ``A (D^2 r_c + sigma*mu/s) - b``, which is the same
    quantity without the large cancelling terms ``A x`` and ``A D^2 s``.
    """
    if not it.is_positive():
        raise ValueError("iterate must be strictly positive")
    d2 = it.x / it.s
    return lp.A @ (d2 * it.rc + sigma * it.mu / it.s) - lp.b


def first_rhs_mnes(rho1: np.ndarray, basis: BasisSelection, scaling: ScalingState, M) -> tuple[np.ndarray, MNESOperator]:
    """Return ``rho1_hat = W rho1`` and the operator for ``M_hat``."""
    op = MNESOperator(M, basis, scaling)
    if M.shape[0] <= DENSE_MNES_LIMIT:
        op._dense = op.dense()
    return op.W(rho1), op


def first_from_dual(lp: StandardFormLP, it: Iterate, sigma: float, dy: np.ndarray,
                    v: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Recover ``(dx, dy, ds)`` from a (possibly inexact) ``dy``.

    ``ds = r_c - A^T dy`` makes the dual row exact; ``v`` is the MNES error
    carrier subtracted from ``dx`` (zero in NES mode).
    """
    ds = it.rc - lp.A.T @ dy
    dx = it.x - (it.x / it.s) * ds - sigma * it.mu / it.s
    if v is not None:
        dx = dx - v
    return dx, dy, ds


def second_rhs(lp: StandardFormLP, it: Iterate, dx: np.ndarray, ds: np.ndarray) -> np.ndarray:
    """``rho2 = 2 A S^{-1} (dx * ds)``."""
    return 2.0 * (lp.A @ (dx * ds / it.s))


def second_from_dual(lp: StandardFormLP, it: Iterate, dx: np.ndarray, ds: np.ndarray,
                     ddy: np.ndarray, v: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    dds = -(lp.A.T @ ddy)
    ddx = -(it.x / it.s) * dds - 2.0 * dx * ds / it.s
    if v is not None:
        ddx = ddx - v
    return ddx, ddy, dds


@dataclass(eq=False)
class FirstDerivative:
    dx: np.ndarray
    dy: np.ndarray
    ds: np.ndarray
    v: np.ndarray
    report: CGReport | None
    # ||M dy - rho1|| recomputed with the unregularised M
    residual: float = 0.0


@dataclass(eq=False)
class SecondDerivative:
    ddx: np.ndarray
    ddy: np.ndarray
    dds: np.ndarray
    v: np.ndarray
    report: CGReport | None = None
    residual: float = 0.0
    skipped: bool = False
    zeroed: bool = False

    @classmethod
    def zero(cls, n: int, m: int, skipped: bool = False) -> "SecondDerivative":
        return cls(np.zeros(n), np.zeros(m), np.zeros(n), np.zeros(n), skipped=skipped)


@dataclass(eq=False)
class DirectionPair:
    first: FirstDerivative
    second: SecondDerivative | None = None

    @property
    def has_second(self) -> bool:
        return self.second is not None

    @property
    def second_skipped(self) -> bool:
        return self.second is not None and self.second.skipped

    @property
    def second_zeroed(self) -> bool:
        return self.second is not None and self.second.zeroed


@dataclass(eq=False)
class NormalSolve:
    """One reduced solve: ``residual`` is ``||M dy - rho||``; ``own_residual``
    and ``own_rhs_norm`` are measured in the system actually solved (``M_hat``
    in MNES mode)."""

    dy: np.ndarray
    v: np.ndarray
    report: CGReport | None
    residual: float
    own_residual: float
    own_rhs_norm: float


@dataclass(eq=False)
class NewtonSystem:
    """Everything shared by the two solves of one iteration.

    ``M`` is assembled once; the Cholesky factor, the basis transform and
    the dense ``M_hat`` are built lazily and reused for the second solve.
    """

    lp: StandardFormLP
    it: Iterate
    backend: str = "cg"
    mode: str = "NES"
    eta: float = 0.3
    basis: BasisSelection | None = None
    cg_cap: int | None = None
    scaling: ScalingState = field(init=False)
    M: sp.csr_matrix = field(init=False)
    _factor: CholeskyFactor | None = field(default=None, init=False)
    _mnes: MNESOperator | None = field(default=None, init=False)

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown system mode {self.mode!r}")
        self.scaling = ScalingState.from_iterate(self.it)
        self.M = normal_matrix(self.lp.A, self.scaling.d2)
        if self.exact:
            return
        if self.mode == "MNES" and self.basis is None:
            self.basis = select_basis(self.lp.A)

    @property
    def exact(self) -> bool:
        return self.backend == "cholesky"

    @property
    def tol(self) -> float:
        """Residual budget ``eta * sqrt(mu / n)`` (or the fixed exact budget)."""
        if self.exact:
            return EXACT_TOL
        return self.eta * math.sqrt(self.it.mu / self.lp.n)

    @property
    def skip_eta(self) -> float:
        return 0.0 if self.exact else self.eta

    @property
    def factor(self) -> CholeskyFactor:
        if self._factor is None:
            self._factor = CholeskyFactor(self.M)
        return self._factor

    @property
    def mnes(self) -> MNESOperator:
        if self._mnes is None:
            self._mnes = MNESOperator(self.M, self.basis, self.scaling)
            if self.lp.m <= DENSE_MNES_LIMIT:
                self._mnes._dense = self._mnes.dense()
        return self._mnes

    def _cg(self, op, rhs):
        tol = self.tol
        cap = self.cg_cap if self.cg_cap is not None else 10 * len(rhs)
        return solve_with_fallback(op, rhs, tol, cap)

    def solve(self, rho: np.ndarray) -> tuple[np.ndarray, np.ndarray, CGReport | None, float]:
        """Solve ``M dy = rho``; return ``(dy, v, report, ||M dy - rho||)``.

        ``v`` is the MNES error carrier (zeros otherwise).
        """
        out = self.solve_full(rho)
        return out.dy, out.v, out.report, out.residual

    def solve_full(self, rho: np.ndarray) -> "NormalSolve":
        n = self.lp.n
        v = np.zeros(n)
        if self.exact:
            dy = self.factor.solve(rho)
            res = float(np.linalg.norm(self.M @ dy - rho))
            report = CGReport(res, 0, EXACT_TOL, regularized=self.factor.regularized,
                              converged=res <= EXACT_TOL * (1.0 + np.linalg.norm(rho)))
            return NormalSolve(dy, v, report, res, res, float(np.linalg.norm(rho)))
        if self.mode == "NES":
            dy, report = self._cg(self.M, rho)
            res = float(np.linalg.norm(self.M @ dy - rho))
            return NormalSolve(dy, v, report, res, res, float(np.linalg.norm(rho)))
        op = self.mnes
        rho_hat = op.W(rho)
        z, report = self._cg(op, rho_hat)
        return self.recover_mnes(z, rho, report, rho_hat)

    def recover_mnes(self, z: np.ndarray, rho: np.ndarray, report: CGReport | None = None,
                     rho_hat: np.ndarray | None = None) -> "NormalSolve":
        """``dy = W^T z`` and the carrier ``v_B = D_B (M_hat z - rho_hat)`` for any ``z``."""
        op = self.mnes
        if rho_hat is None:
            rho_hat = op.W(rho)
        rhat = op.matvec(z) - rho_hat
        dy = op.Wt(z)
        v = np.zeros(self.lp.n)
        v[self.basis.indices] = self.scaling.d[self.basis.indices] * rhat
        return NormalSolve(dy, v, report, float(np.linalg.norm(self.M @ dy - rho)),
                           float(np.linalg.norm(rhat)), float(np.linalg.norm(rho_hat)))

    def zero_solution(self, rho: np.ndarray) -> "NormalSolve":
        """The all-zero solution, recovered the same way as a computed one.

        In MNES mode this is ``z = 0``, whose residual ``-rho_hat`` is moved
        into ``v`` so the equality rows stay exact.
        """
        m = self.lp.m
        if self.exact or self.mode == "NES":
            norm = float(np.linalg.norm(rho))
            return NormalSolve(np.zeros(m), np.zeros(self.lp.n), None, norm, norm, norm)
        return self.recover_mnes(np.zeros(m), rho)


def solve_first_direction(lp: StandardFormLP, it: Iterate, sigma: float, eta: float = 0.3,
                          backend: str = "cg", mode: str = "NES",
                          system: NewtonSystem | None = None) -> FirstDerivative:
    """Inexact (or exact) solution of the perturbed first-derivative system."""
    if system is None:
        system = NewtonSystem(lp, it, backend=backend, mode=mode, eta=eta)
    rho1 = first_rhs_nes(lp, it, sigma)
    dy, v, report, res = system.solve(rho1)
    dx, dy, ds = first_from_dual(lp, it, sigma, dy, v)
    return FirstDerivative(dx, dy, ds, v, report, res)


def solve_second_direction(lp: StandardFormLP, it: Iterate, first: FirstDerivative,
                           eta: float = 0.3, backend: str = "cg", mode: str = "NES",
                           system: NewtonSystem | None = None) -> SecondDerivative:
    """Second derivative with the skip rule and the zero-vector fallback.

    * skip: if ``||2 dx*ds||_inf <= eta*mu`` the zero triple already meets the
      accuracy budget, so no system is solved;
    * fallback: if the solve is worse than doing nothing
      (``||M ddy - rho2|| > ||rho2||``, measured with ``M_hat`` in MNES
      mode), the solution is replaced by zero.  In NES mode that leaves
      ``ddx = -2 S^{-1}(dx*ds)`` and ``v = 0``; in MNES mode the zero
      ``z`` goes through the usual recovery, so ``A ddx = 0`` still holds.
    """
    if system is None:
        system = NewtonSystem(lp, it, backend=backend, mode=mode, eta=eta)
    n, m = lp.n, lp.m
    prod = first.dx * first.ds
    if np.max(np.abs(2.0 * prod)) <= system.skip_eta * it.mu:
        return SecondDerivative.zero(n, m, skipped=True)
    rho2 = second_rhs(lp, it, first.dx, first.ds)
    try:
        out = system.solve_full(rho2)
    except SolverFailure:
        out = None
    if out is None or out.own_residual > out.own_rhs_norm:
        # worse than not solving at all: fall back to the zero solution
        report = None if out is None else out.report
        zero = system.zero_solution(rho2)
        ddx, ddy, dds = second_from_dual(lp, it, first.dx, first.ds, zero.dy, zero.v)
        return SecondDerivative(ddx, ddy, dds, zero.v, report, zero.residual, zeroed=True)
    ddx, ddy, dds = second_from_dual(lp, it, first.dx, first.ds, out.dy, out.v)
    return SecondDerivative(ddx, ddy, dds, out.v, out.report, out.residual)


def solve_complementarity_rhs(lp: StandardFormLP, it: Iterate, w: np.ndarray,
                              system: NewtonSystem) -> FirstDerivative:
    """Direction for a general third-row right-hand side ``S dx + X ds = w``.

    With ``w = x*s - sigma*mu*e`` this is the first derivative; the
    Mehrotra corrector uses ``w = x*s - sigma*mu*e + dx_aff*ds_aff``.
    """
    d2 = system.scaling.d2
    rho = it.rb + lp.A @ (d2 * it.rc - w / it.s)
    dy, v, report, res = system.solve(rho)
    ds = it.rc - lp.A.T @ dy
    dx = w / it.s - d2 * ds - v
    return FirstDerivative(dx, dy, ds, v, report, res)


def compute_directions(lp: StandardFormLP, it: Iterate, sigma: float, eta: float,
                       backend: str = "cg", mode: str = "NES", second: bool = True,
                       basis: BasisSelection | None = None, cg_cap: int | None = None) -> DirectionPair:
    """Both derivatives for one iteration, sharing ``M`` and any factorisation."""
    system = NewtonSystem(lp, it, backend=backend, mode=mode, eta=eta, basis=basis, cg_cap=cg_cap)
    first = solve_first_direction(lp, it, sigma, system=system)
    sec = solve_second_direction(lp, it, first, system=system) if second else None
    return DirectionPair(first, sec)
