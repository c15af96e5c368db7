"""Shared builders for tests that need package objects."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from arcipm.lp_model import StandardFormLP, make_iterate
from arcipm.newton_system import (
    NewtonSystem,
    first_from_dual,
    first_rhs_nes,
    second_from_dual,
    second_rhs,
)


def random_instance(m, n, seed, spread=2.0):
    """Dense random LP with a strictly positive, infeasible iterate."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    lp = StandardFormLP(sp.csr_matrix(A), rng.standard_normal(m), rng.standard_normal(n))
    x = rng.uniform(1.0 / spread, spread, n)
    s = rng.uniform(1.0 / spread, spread, n)
    it = make_iterate(lp, x, rng.standard_normal(m), s)
    return lp, it, A


def at_bound(rng, size, radius):
    """Random vector of norm ``radius``."""
    r = rng.standard_normal(size)
    return radius * r / np.linalg.norm(r)


def injected_mnes_directions(lp, it, sigma, r1_hat, r2_hat, eta=0.3):
    """First and second derivatives whose MNES residuals are exactly ``r1_hat``, ``r2_hat``.

    The transformed systems are solved densely with the error added to the
    right-hand side; recovery then runs through the package code path.
    """
    system = NewtonSystem(lp, it, backend="cg", mode="MNES", eta=eta)
    op = system.mnes
    Mh = op.dense()
    rho1 = first_rhs_nes(lp, it, sigma)
    z1 = np.linalg.solve(Mh, op.W(rho1) + r1_hat)
    out1 = system.recover_mnes(z1, rho1)
    dx, dy, ds = first_from_dual(lp, it, sigma, out1.dy, out1.v)
    rho2 = second_rhs(lp, it, dx, ds)
    z2 = np.linalg.solve(Mh, op.W(rho2) + r2_hat)
    out2 = system.recover_mnes(z2, rho2)
    ddx, ddy, dds = second_from_dual(lp, it, dx, ds, out2.dy, out2.v)
    return system, (dx, dy, ds, out1.v), (ddx, ddy, dds, out2.v)


def recovery_defects(A, it, sigma, first, second):
    """Relative defects of the six recovery equations (first three, then second three)."""
    x, s = it.x, it.s
    dx, dy, ds, v1 = first
    ddx, ddy, dds, v2 = second
    nA = np.linalg.norm(A)

    def rel(lhs, rhs, *scale):
        return np.linalg.norm(lhs - rhs) / (1.0 + np.linalg.norm(rhs) + sum(scale))

    comp = x * s - sigma * it.mu - s * v1
    return [
        rel(A @ dx, it.rb, nA * np.linalg.norm(dx)),
        rel(A.T @ dy + ds, it.rc, nA * np.linalg.norm(dy)),
        rel(s * dx + x * ds, comp, np.linalg.norm(s * dx) + np.linalg.norm(x * ds)),
        rel(A @ ddx, 0.0 * it.rb, nA * np.linalg.norm(ddx)),
        rel(A.T @ ddy + dds, 0.0 * it.rc, nA * np.linalg.norm(ddy)),
        rel(s * ddx + x * dds, -2.0 * dx * ds - s * v2,
            np.linalg.norm(s * ddx) + np.linalg.norm(x * dds)),
    ]
