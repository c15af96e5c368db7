"""Feasible and bounded random LPs built around a known interior point."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .lp_model import StandardFormLP

__all__ = ["random_feasible_lp", "random_suite"]


def random_feasible_lp(m: int, n: int, seed: int | np.random.Generator = 0,
                       density: float = 1.0, name: str | None = None) -> StandardFormLP:
    """``A`` Gaussian, ``b = A x0`` and ``c = A^T y0 + s0`` with ``x0, s0 > 0``.

    Strictly feasible primal and dual points exist by construction, so the LP
    has a finite optimum.  ``density < 1`` sparsifies ``A`` while keeping
    every row and column nonempty.
    """
    if not 0 < m <= n:
        raise ValueError("need 0 < m <= n")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    if density < 1.0:
        mask = rng.random((m, n)) < density
        mask[np.arange(m), rng.permutation(n)[:m]] = True
        mask[rng.integers(0, m, n), np.arange(n)] = True
        A = A * mask
    x0 = rng.uniform(0.5, 2.0, n)
    s0 = rng.uniform(0.5, 2.0, n)
    y0 = rng.standard_normal(m)
    b = A @ x0
    c = A.T @ y0 + s0
    return StandardFormLP(sp.csr_matrix(A), b, c, name=name or f"rand_{m}x{n}")


def random_suite(count: int, m_range: tuple[int, int], n_range: tuple[int, int],
                 seed: int = 0, density: float = 1.0) -> list[StandardFormLP]:
    """``count`` instances with sizes drawn uniformly from the inclusive ranges (m <= n)."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        m = int(rng.integers(m_range[0], min(m_range[1], n) + 1))
        out.append(random_feasible_lp(m, n, rng, density=density, name=f"rand{i:02d}_{m}x{n}"))
    return out
