"""Standard-form LPs, conversion from raw MPS models, and row preprocessing.

Every problem handed to a solver has the shape

    min c^T x   s.t.  A x = b,  x >= 0

with ``A`` a CSR matrix of full row rank.  A linear provenance map
``x_orig = recover_offset + recover @ x`` takes standard-form points back to
the variables of the original model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .mps import RawLPModel

__all__ = [
    "LPModelError",
    "InfeasibleModelError",
    "DegenerateProblemError",
    "StandardFormLP",
    "Iterate",
    "to_standard_form",
    "preprocess",
    "residuals",
    "duality_measure",
    "initial_point",
    "make_iterate",
    "read_triple",
    "write_triple",
    "load_problem",
]

DUPLICATE_TOL = 1e-12
RANK_TOL = 1e-10


class LPModelError(ValueError):
    """The model cannot be brought into a solvable standard form."""


class InfeasibleModelError(LPModelError):
    """Preprocessing proved the equality system inconsistent."""


class DegenerateProblemError(LPModelError):
    """Nothing is left to solve after preprocessing."""


def _canonical_csr(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A, dtype=float)
    A.eliminate_zeros()
    A.sum_duplicates()
    A.sort_indices()
    return A


@dataclass(frozen=True, eq=False)
class StandardFormLP:
    """``min c^T x  s.t.  A x = b, x >= 0`` plus the way back to the source model.

    ``recover`` (n_orig x n) and ``recover_offset`` map a standard-form point to
    the original variables; ``orig_cost`` and ``objective_constant`` evaluate
    the original objective there, so reported objectives never depend on how
    the conversion signed or shifted things.
    """

    A: sp.csr_matrix
    b: np.ndarray
    c: np.ndarray
    name: str = ""
    row_names: tuple[str, ...] = ()
    col_names: tuple[str, ...] = ()
    recover: sp.csr_matrix | None = None
    recover_offset: np.ndarray | None = None
    orig_cost: np.ndarray | None = None
    objective_constant: float = 0.0
    orig_names: tuple[str, ...] = ()

    def __post_init__(self):
        A = _canonical_csr(self.A)
        m, n = A.shape
        b = np.asarray(self.b, dtype=float).reshape(-1)
        c = np.asarray(self.c, dtype=float).reshape(-1)
        if b.shape != (m,) or c.shape != (n,):
            raise ValueError(f"shape mismatch: A {A.shape}, b {b.shape}, c {c.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        if self.recover is None:
            object.__setattr__(self, "recover", sp.identity(n, format="csr"))
            object.__setattr__(self, "recover_offset", np.zeros(n))
            object.__setattr__(self, "orig_cost", c.copy())
        if not self.row_names:
            object.__setattr__(self, "row_names", tuple(f"R{i}" for i in range(m)))
        if not self.col_names:
            object.__setattr__(self, "col_names", tuple(f"C{j}" for j in range(n)))

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def original_x(self, x: np.ndarray) -> np.ndarray:
        return self.recover_offset + self.recover @ x

    def original_objective(self, x: np.ndarray) -> float:
        """Objective of the source model (original sense, constant included)."""
        return float(self.orig_cost @ self.original_x(x)) + self.objective_constant


@dataclass(frozen=True, eq=False)
class Iterate:
    """A primal-dual point with its cached residuals and duality measure."""

    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    mu: float
    rb: np.ndarray
    rc: np.ndarray

    @property
    def residual_norm(self) -> float:
        return math.hypot(np.linalg.norm(self.rb), np.linalg.norm(self.rc))

    def is_positive(self) -> bool:
        return bool(np.all(self.x > 0) and np.all(self.s > 0))


def residuals(lp: StandardFormLP, x, y, s) -> tuple[np.ndarray, np.ndarray]:
    """Primal residual ``A x - b`` and dual residual ``A^T y + s - c``."""
    x, y, s = (np.asarray(v, dtype=float) for v in (x, y, s))
    if x.shape != (lp.n,) or s.shape != (lp.n,) or y.shape != (lp.m,):
        raise ValueError(
            f"point dimensions x{x.shape} y{y.shape} s{s.shape} do not match "
            f"m={lp.m}, n={lp.n}"
        )
    return lp.A @ x - lp.b, lp.A.T @ y + s - lp.c


def duality_measure(x, s) -> float:
    """``x^T s / n``."""
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    if x.ndim != 1 or x.shape != s.shape or x.size == 0:
        raise ValueError("x and s must be nonempty vectors of equal length")
    return float(x @ s) / x.size


def make_iterate(lp: StandardFormLP, x, y, s) -> Iterate:
    x, y, s = (np.array(v, dtype=float) for v in (x, y, s))
    rb, rc = residuals(lp, x, y, s)
    return Iterate(x=x, y=y, s=s, mu=duality_measure(x, s), rb=rb, rc=rc)


def initial_point(lp: StandardFormLP, scale: float = 1e4) -> Iterate:
    """``(x, y, s) = scale * (e, 0, e)``; perfectly centred, so inside N(gamma1, gamma2)."""
    if not scale > 0:
        raise ValueError(f"initial-point scale must be positive, got {scale}")
    return make_iterate(lp, np.full(lp.n, scale), np.zeros(lp.m), np.full(lp.n, scale))


# ---------------------------------------------------------------------------
# conversion
# ---------------------------------------------------------------------------


@dataclass
class _Builder:
    """Accumulates standard-form columns and rows during conversion."""

    m: int
    cols: list[dict[int, float]] = field(default_factory=list)
    costs: list[float] = field(default_factory=list)
    names: list[str] = field(default_factory=list)
    extra_rows: list[tuple[dict[int, float], float, str]] = field(default_factory=list)

    def add_column(self, entries: dict[int, float], cost: float, name: str) -> int:
        self.cols.append(entries)
        self.costs.append(cost)
        self.names.append(name)
        return len(self.cols) - 1

    def add_row(self, entries: dict[int, float], rhs: float, name: str) -> None:
        self.extra_rows.append((entries, rhs, name))


def to_standard_form(model: RawLPModel) -> StandardFormLP:
    """Convert a raw model to ``min c^T x, A x = b, x >= 0``.

    Inequalities get slack or surplus columns, two-sided rows and doubly
    bounded variables get an extra bound row, free variables are split into
    positive and negative parts, fixed variables are substituted out, and a
    maximisation is negated.
    """
    model.validate()
    row_names = model.constraint_rows
    row_index = {r: i for i, r in enumerate(row_names)}
    m = len(row_names)
    sign = -1.0 if model.sense == "max" else 1.0

    col_entries: dict[str, dict[int, float]] = {c: {} for c in model.columns}
    for row, col, val in model.entries:
        col_entries[col][row_index[row]] = val

    b = np.array([model.rhs.get(r, 0.0) for r in row_names], dtype=float)
    orig_cost = np.array([model.objective.get(c, 0.0) for c in model.columns])
    n_orig = len(model.columns)
    offset = np.zeros(n_orig)
    rec_rows: list[int] = []
    rec_cols: list[int] = []
    rec_vals: list[float] = []
    bld = _Builder(m)

    for j, col in enumerate(model.columns):
        lo, up = model.column_bounds(col)
        if lo > up:
            raise LPModelError(f"variable {col!r} has lower bound {lo} > upper bound {up}")
        a = col_entries[col]
        cj = sign * orig_cost[j]
        if lo == up:
            offset[j] = lo
            for i, v in a.items():
                b[i] -= v * lo
            continue
        if math.isfinite(lo):
            offset[j] = lo
            for i, v in a.items():
                b[i] -= v * lo
            k = bld.add_column(dict(a), cj, col)
            rec_rows.append(j), rec_cols.append(k), rec_vals.append(1.0)
            if math.isfinite(up):
                t = bld.add_column({}, 0.0, f"{col}#ub")
                bld.add_row({k: 1.0, t: 1.0}, up - lo, f"{col}#ub")
        elif math.isfinite(up):
            offset[j] = up
            for i, v in a.items():
                b[i] -= v * up
            k = bld.add_column({i: -v for i, v in a.items()}, -cj, col)
            rec_rows.append(j), rec_cols.append(k), rec_vals.append(-1.0)
        else:
            kp = bld.add_column(dict(a), cj, f"{col}+")
            kn = bld.add_column({i: -v for i, v in a.items()}, -cj, f"{col}-")
            rec_rows += [j, j]
            rec_cols += [kp, kn]
            rec_vals += [1.0, -1.0]

    for i, row in enumerate(row_names):
        kind = model.rows[row]
        rhs = model.rhs.get(row, 0.0)
        rng = model.ranges.get(row)
        if kind == "E":
            if rng is None or rng == 0.0:
                continue
            lo, up = (rhs, rhs + rng) if rng > 0 else (rhs + rng, rhs)
        elif kind == "L":
            lo, up = (rhs - abs(rng), rhs) if rng is not None else (-math.inf, rhs)
        else:
            lo, up = (rhs, rhs + abs(rng)) if rng is not None else (rhs, math.inf)
        if lo == up:
            continue
        # slack columns carry the row's own rhs adjustment (already in b[i])
        if math.isfinite(up):
            k = bld.add_column({i: 1.0}, 0.0, f"{row}#slack")
            if math.isfinite(lo):
                t = bld.add_column({}, 0.0, f"{row}#range")
                bld.add_row({k: 1.0, t: 1.0}, up - lo, f"{row}#range")
            # the row reads a x + s = up; b[i] currently holds rhs - shifts
            b[i] += up - rhs
        else:
            bld.add_column({i: -1.0}, 0.0, f"{row}#surplus")
            b[i] += lo - rhs

    n = len(bld.cols)
    extra = len(bld.extra_rows)
    rows_i: list[int] = []
    cols_j: list[int] = []
    vals: list[float] = []
    for k, entries in enumerate(bld.cols):
        for i, v in entries.items():
            rows_i.append(i), cols_j.append(k), vals.append(v)
    b_extra = []
    names_extra = []
    for r, (entries, rhs, name) in enumerate(bld.extra_rows):
        for k, v in entries.items():
            rows_i.append(m + r), cols_j.append(k), vals.append(v)
        b_extra.append(rhs)
        names_extra.append(name)
    A = sp.csr_matrix((vals, (rows_i, cols_j)), shape=(m + extra, n))
    recover = sp.csr_matrix((rec_vals, (rec_rows, rec_cols)), shape=(n_orig, n))
    return StandardFormLP(
        A=A,
        b=np.concatenate([b, b_extra]),
        c=np.array(bld.costs, dtype=float),
        name=model.name,
        row_names=tuple(row_names) + tuple(names_extra),
        col_names=tuple(bld.names),
        recover=recover,
        recover_offset=offset,
        orig_cost=orig_cost,
        objective_constant=model.objective_constant,
        orig_names=tuple(model.columns),
    )


# ---------------------------------------------------------------------------
# preprocessing
# ---------------------------------------------------------------------------


def _drop_zero_rows(A: sp.csr_matrix, b: np.ndarray, names) -> np.ndarray:
    nnz = np.diff(A.indptr)
    zero = nnz == 0
    bad = zero & (np.abs(b) > 0)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise InfeasibleModelError(f"row {names[i]!r} is empty but has rhs {b[i]}")
    return np.flatnonzero(~zero)


def _drop_duplicate_rows(A: sp.csr_matrix, b: np.ndarray, keep: np.ndarray, names) -> np.ndarray:
    buckets: dict[tuple[int, ...], list[tuple[int, np.ndarray, float]]] = {}
    out = []
    for i in keep:
        lo, hi = A.indptr[i], A.indptr[i + 1]
        idx = tuple(A.indices[lo:hi])
        vals = A.data[lo:hi]
        k = int(np.argmax(np.abs(vals)))
        scale = 1.0 / vals[k]  # also fixes the sign, so r and -2r coincide
        scaled = vals * scale
        rhs = b[i] * scale
        dup = None
        for j, other, other_rhs in buckets.get(idx, ()):
            if np.max(np.abs(scaled - other)) <= DUPLICATE_TOL:
                dup = (j, other_rhs)
                break
        if dup is None:
            buckets.setdefault(idx, []).append((i, scaled, rhs))
            out.append(i)
            continue
        j, other_rhs = dup
        if abs(rhs - other_rhs) > 1e-9 * max(1.0, abs(rhs), abs(other_rhs)):
            raise InfeasibleModelError(
                f"rows {names[j]!r} and {names[i]!r} have equal coefficients "
                f"but conflicting right-hand sides"
            )
    return np.array(out, dtype=int)


def _independent_rows(A: sp.csr_matrix, b: np.ndarray, keep: np.ndarray, names) -> np.ndarray:
    sub = A[keep].toarray()
    if sub.shape[0] == 0:
        return keep
    # pivoted QR on A^T: the pivot order ranks rows of A by independence
    _, R, piv = sla.qr(sub.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        return keep[:0]
    rank = int(np.sum(diag > RANK_TOL * diag[0]))
    if rank == sub.shape[0]:
        return keep
    chosen = np.sort(piv[:rank])
    dropped = np.sort(piv[rank:])
    # a dependent row is redundant only if its rhs follows the same combination
    basis = sub[chosen]
    W, *_ = np.linalg.lstsq(basis.T, sub[dropped].T, rcond=None)
    implied = W.T @ b[keep[chosen]]
    actual = b[keep[dropped]]
    gap = np.abs(implied - actual)
    tol = 1e-8 * (1.0 + np.abs(actual) + np.abs(W.T) @ np.abs(b[keep[chosen]]))
    if np.any(gap > tol):
        r = int(keep[dropped[int(np.argmax(gap - tol))]])
        raise InfeasibleModelError(f"row {names[r]!r} is a combination of other rows with inconsistent rhs")
    return keep[chosen]


def preprocess(lp: StandardFormLP) -> StandardFormLP:
    """Remove empty, duplicated and linearly dependent rows so that rank(A) = m.

    Raises :class:`InfeasibleModelError` when a removed row contradicts the
    ones kept, and :class:`DegenerateProblemError` when no rows remain.
    """
    A, b, names = lp.A, lp.b, lp.row_names
    keep = _drop_zero_rows(A, b, names)
    keep = _drop_duplicate_rows(A, b, keep, names)
    keep = _independent_rows(A, b, keep, names)
    if keep.size == 0:
        raise DegenerateProblemError("no constraint rows remain after preprocessing")
    if keep.size == lp.m:
        return lp
    return replace(
        lp,
        A=A[keep],
        b=b[keep],
        row_names=tuple(names[i] for i in keep),
    )


# ---------------------------------------------------------------------------
# plain-text triple format
# ---------------------------------------------------------------------------


def read_triple(path: str | Path) -> StandardFormLP:
    """Read the ``m n nnz`` / COO / b / c text format (0-based indices)."""
    path = Path(path)
    tokens = path.read_text().split()
    try:
        m, n, nnz = (int(t) for t in tokens[:3])
        pos = 3
        coo = np.array(tokens[pos:pos + 3 * nnz], dtype=float).reshape(nnz, 3)
        pos += 3 * nnz
        b = np.array(tokens[pos:pos + m], dtype=float)
        pos += m
        c = np.array(tokens[pos:pos + n], dtype=float)
        pos += n
    except (ValueError, IndexError) as exc:
        raise LPModelError(f"{path}: malformed triple file ({exc})") from None
    if b.size != m or c.size != n or pos != len(tokens):
        raise LPModelError(f"{path}: expected {3 + 3 * nnz + m + n} values, found {len(tokens)}")
    rows, cols = coo[:, 0].astype(int), coo[:, 1].astype(int)
    if np.any(rows < 0) or np.any(rows >= m) or np.any(cols < 0) or np.any(cols >= n):
        raise LPModelError(f"{path}: index out of range")
    A = sp.csr_matrix((coo[:, 2], (rows, cols)), shape=(m, n))
    return StandardFormLP(A=A, b=b, c=c, name=path.name.split(".")[0])


def write_triple(lp: StandardFormLP, path: str | Path) -> None:
    coo = lp.A.tocoo()
    lines = [f"{lp.m} {lp.n} {coo.nnz}"]
    lines += [f"{i} {j} {v!r}" for i, j, v in zip(coo.row, coo.col, coo.data.tolist())]
    lines += [repr(v) for v in lp.b.tolist()]
    lines += [repr(v) for v in lp.c.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def load_problem(path: str | Path) -> StandardFormLP:
    """Load an MPS (``.mps``/``.mps.gz``/anything else) or triple (``.coo``/``.txt``) file."""
    from .mps import read_mps

    path = Path(path)
    if path.suffix in (".coo", ".txt", ".tri"):
        lp = read_triple(path)
    else:
        lp = to_standard_form(read_mps(path))
    return preprocess(lp)
