"""Reader for linear programs in MPS format (fixed and free dialects).

Only the LP subset is understood: NAME, OBJSENSE, ROWS, COLUMNS, RHS,
RANGES, BOUNDS and ENDATA.  Quadratic, SOS and integer-marker content is
rejected rather than silently dropped.
"""

from __future__ import annotations

import gzip
import math
from dataclasses import dataclass, field
from pathlib import Path

__all__ = ["MPSError", "RawLPModel", "parse_mps", "read_mps"]

_ROW_KINDS = {"N", "E", "L", "G"}
_BOUND_TYPES = {"UP", "LO", "FX", "FR", "MI", "PL"}
_VALUELESS_BOUNDS = {"FR", "MI", "PL"}
_UNSUPPORTED_SECTIONS = {
    "SOS", "QUADOBJ", "QMATRIX", "QSECTION", "QCMATRIX", "CSECTION", "INDICATORS",
}
# Column offsets of the six fixed-format fields (1-based columns 2-3, 5-12,
# 15-22, 25-36, 40-47, 50-61).
_FIXED_FIELDS = ((1, 3), (4, 12), (14, 22), (24, 36), (39, 47), (49, 61))


class MPSError(ValueError):
    """Malformed or unsupported MPS input.

    ``lineno`` is 1-based, or ``None`` for whole-file semantic errors.
    """

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


@dataclass
class RawLPModel:
    """An LP exactly as declared in an MPS file, before any conversion.

    ``rows`` maps row name to its relation (``"N"``, ``"E"``, ``"L"``, ``"G"``)
    in declaration order; ``entries`` holds ``(row, column, value)`` triplets
    for constraint rows and ``objective`` holds the cost coefficients.
    ``bounds`` maps a column name to ``(lower, upper)``; columns missing from
    it have the default bounds ``[0, inf)``.
    """

    name: str = ""
    objective_name: str | None = None
    sense: str = "min"
    rows: dict[str, str] = field(default_factory=dict)
    columns: list[str] = field(default_factory=list)
    entries: list[tuple[str, str, float]] = field(default_factory=list)
    objective: dict[str, float] = field(default_factory=dict)
    rhs: dict[str, float] = field(default_factory=dict)
    ranges: dict[str, float] = field(default_factory=dict)
    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)
    # constant term of the objective; MPS stores its negation as the RHS
    # of the objective row
    objective_constant: float = 0.0

    @property
    def constraint_rows(self) -> list[str]:
        return [r for r, kind in self.rows.items() if kind != "N"]

    def column_bounds(self, col: str) -> tuple[float, float]:
        return self.bounds.get(col, (0.0, math.inf))

    def validate(self) -> None:
        """Check the cross-references that parsing alone cannot guarantee."""
        if self.objective_name is None:
            raise MPSError("no objective (N) row declared")
        known = set(self.columns)
        for row, col, _ in self.entries:
            if row not in self.rows or self.rows[row] == "N":
                raise MPSError(f"entry references undeclared constraint row {row!r}")
            if col not in known:
                raise MPSError(f"entry references undeclared column {col!r}")
        for row in list(self.rhs) + list(self.ranges):
            if row not in self.rows:
                raise MPSError(f"reference to undeclared row {row!r}")
        for col in self.bounds:
            if col not in known:
                raise MPSError(f"bound on undeclared column {col!r}")


def _to_float(token: str, lineno: int) -> float:
    try:
        return float(token.replace("D", "E").replace("d", "e"))
    except ValueError:
        raise MPSError(f"invalid number {token!r}", lineno) from None


def _fixed_fields(line: str) -> list[str]:
    out = [line[a:b].strip() for a, b in _FIXED_FIELDS]
    while out and not out[-1]:
        out.pop()
    return out


class _Parser:
    def __init__(self, fmt: str):
        if fmt not in ("auto", "free", "fixed"):
            raise ValueError(f"unknown MPS format {fmt!r}")
        self.fmt = fmt
        self.model = RawLPModel()
        self.section: str | None = None
        self.rhs_set: str | None = None
        self.range_set: str | None = None
        self.bound_set: str | None = None
        self.seen_columns: set[str] = set()
        self.current_col: str | None = None
        self.col_rows: set[str] = set()
        self.objsense_pending = False

    def tokens(self, line: str) -> list[str]:
        if self.fmt == "fixed":
            fields = _fixed_fields(line)
            if self.section in ("ROWS", "BOUNDS"):
                return fields
            # field 1 (the type code) is blank in these sections
            return fields[1:]
        return line.split()

    def feed(self, raw: str, lineno: int) -> bool:
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("*"):
            return True
        if not line[0].isspace():
            return self.header(line, lineno)
        if self.section is None:
            raise MPSError("data line before any section header", lineno)
        getattr(self, "line_" + self.section.lower())(self.tokens(line), lineno)
        return True

    def header(self, line: str, lineno: int) -> bool:
        parts = line.split()
        key = parts[0].upper()
        if key == "ENDATA":
            return False
        if key == "NAME":
            self.model.name = parts[1] if len(parts) > 1 else ""
            self.section = None
            return True
        if key in _UNSUPPORTED_SECTIONS:
            raise MPSError(f"unsupported section {key}", lineno)
        if key == "OBJSENSE":
            self.section = "OBJSENSE"
            if len(parts) > 1:
                self.set_sense(parts[1], lineno)
            return True
        if key == "OBJSENCE":  # common misspelling in the wild
            self.section = "OBJSENSE"
            return True
        if key not in ("ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS"):
            raise MPSError(f"malformed section header {parts[0]!r}", lineno)
        self.section = key
        return True

    def set_sense(self, token: str, lineno: int) -> None:
        word = token.upper()
        if word in ("MAX", "MAXIMIZE"):
            self.model.sense = "max"
        elif word in ("MIN", "MINIMIZE"):
            self.model.sense = "min"
        else:
            raise MPSError(f"unknown objective sense {token!r}", lineno)

    def line_objsense(self, tok: list[str], lineno: int) -> None:
        self.set_sense(tok[0], lineno)

    def line_rows(self, tok: list[str], lineno: int) -> None:
        if len(tok) != 2:
            raise MPSError("ROWS line needs a relation and a name", lineno)
        kind, name = tok[0].upper(), tok[1]
        if kind not in _ROW_KINDS:
            raise MPSError(f"unknown row type {tok[0]!r}", lineno)
        if name in self.model.rows:
            raise MPSError(f"duplicate row name {name!r}", lineno)
        if kind == "N":
            if self.model.objective_name is not None:
                raise MPSError(f"second objective row {name!r}", lineno)
            self.model.objective_name = name
        self.model.rows[name] = kind

    def line_columns(self, tok: list[str], lineno: int) -> None:
        if len(tok) >= 2 and tok[1].strip("'\"").upper() == "MARKER":
            raise MPSError("integer MARKER lines are not supported", lineno)
        if len(tok) not in (3, 5):
            raise MPSError("COLUMNS line needs a column and 1 or 2 (row, value) pairs", lineno)
        col = tok[0]
        if col != self.current_col:
            if col in self.seen_columns:
                raise MPSError(f"column {col!r} is not contiguous", lineno)
            self.seen_columns.add(col)
            self.model.columns.append(col)
            self.current_col = col
            self.col_rows = set()
        for row, val in zip(tok[1::2], tok[2::2]):
            kind = self.model.rows.get(row)
            if kind is None:
                raise MPSError(f"reference to undeclared row {row!r}", lineno)
            if row in self.col_rows:
                raise MPSError(f"duplicate entry ({row!r}, {col!r})", lineno)
            self.col_rows.add(row)
            v = _to_float(val, lineno)
            if kind == "N":
                self.model.objective[col] = v
            elif v != 0.0:
                self.model.entries.append((row, col, v))

    def _pairs(self, tok: list[str], lineno: int, what: str) -> tuple[str | None, list[str]]:
        # the set name is optional in free format: an even token count means
        # the line is only (row, value) pairs
        if len(tok) in (2, 4):
            return None, tok
        if len(tok) in (3, 5):
            return tok[0], tok[1:]
        raise MPSError(f"malformed {what} line", lineno)

    def line_rhs(self, tok: list[str], lineno: int) -> None:
        setname, pairs = self._pairs(tok, lineno, "RHS")
        if self.rhs_set is None:
            self.rhs_set = setname
        elif setname != self.rhs_set:
            return
        for row, val in zip(pairs[0::2], pairs[1::2]):
            if row not in self.model.rows:
                raise MPSError(f"reference to undeclared row {row!r}", lineno)
            v = _to_float(val, lineno)
            if self.model.rows[row] == "N":
                self.model.objective_constant = -v
            else:
                self.model.rhs[row] = v

    def line_ranges(self, tok: list[str], lineno: int) -> None:
        setname, pairs = self._pairs(tok, lineno, "RANGES")
        if self.range_set is None:
            self.range_set = setname
        elif setname != self.range_set:
            return
        for row, val in zip(pairs[0::2], pairs[1::2]):
            kind = self.model.rows.get(row)
            if kind is None:
                raise MPSError(f"reference to undeclared row {row!r}", lineno)
            if kind == "N":
                raise MPSError(f"range on objective row {row!r}", lineno)
            self.model.ranges[row] = _to_float(val, lineno)

    def line_bounds(self, tok: list[str], lineno: int) -> None:
        if not tok:
            raise MPSError("empty BOUNDS line", lineno)
        btype = tok[0].upper()
        if btype in ("BV", "LI", "UI", "SC"):
            raise MPSError(f"integer bound type {btype} is not supported", lineno)
        if btype not in _BOUND_TYPES:
            raise MPSError(f"unknown bound type {tok[0]!r}", lineno)
        rest = tok[1:]
        needs_value = btype not in _VALUELESS_BOUNDS
        # valueless bounds may carry a trailing value in some writers; ignore it
        if needs_value:
            if len(rest) == 3:
                setname, col, val = rest
            elif len(rest) == 2:
                setname, (col, val) = None, rest
            else:
                raise MPSError("malformed BOUNDS line", lineno)
        else:
            if len(rest) in (2, 3):
                setname, col = rest[0], rest[1]
            elif len(rest) == 1:
                setname, col = None, rest[0]
            else:
                raise MPSError("malformed BOUNDS line", lineno)
            val = None
        if self.bound_set is None:
            self.bound_set = setname
        elif setname != self.bound_set:
            return
        if col not in self.seen_columns:
            raise MPSError(f"bound on undeclared column {col!r}", lineno)
        lo, up = self.model.bounds.get(col, (0.0, math.inf))
        v = _to_float(val, lineno) if val is not None else None
        if btype == "UP":
            # classic convention: a negative upper bound with the default
            # lower bound makes the variable unbounded below
            if v < 0 and lo == 0.0:
                lo = -math.inf
            up = v
        elif btype == "LO":
            lo = v
        elif btype == "FX":
            lo = up = v
        elif btype == "FR":
            lo, up = -math.inf, math.inf
        elif btype == "MI":
            lo = -math.inf
        elif btype == "PL":
            up = math.inf
        self.model.bounds[col] = (lo, up)


def parse_mps(text: str | bytes, fmt: str = "auto") -> RawLPModel:
    """Parse MPS text into a :class:`RawLPModel`.

    ``fmt="auto"`` and ``"free"`` split fields on whitespace, which reads
    every Netlib file; ``"fixed"`` uses the historical column positions and
    so allows names containing spaces.
    """
    if isinstance(text, bytes):
        text = text.decode("latin-1")
    parser = _Parser(fmt)
    ended = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not parser.feed(line, lineno):
            ended = True
            break
    if not ended and parser.section is None and not parser.model.rows:
        raise MPSError("empty input")
    model = parser.model
    model.validate()
    return model


def read_mps(path: str | Path, fmt: str = "auto") -> RawLPModel:
    """Read an MPS file from disk, transparently handling ``.gz``."""
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        data = fh.read()
    model = parse_mps(data, fmt=fmt)
    if not model.name:
        model.name = path.name.split(".")[0]
    return model
