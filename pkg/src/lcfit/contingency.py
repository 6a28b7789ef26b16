"""Binary response data as dense pattern-frequency tables.

Patterns are indexed by their binary encoding with variable 1 as the most
significant bit, so for J = 3 the pattern (1, 0, 1) lives at index 5.
Variable indices in the public API are 1-based.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MAX_J = 24


class DataError(ValueError):
    """Malformed or inconsistent input data."""


# ------------------------------------------------------------------ #
# Pattern encoding
# ------------------------------------------------------------------ #


def encode(pattern: Sequence[int]) -> int:
    idx = 0
    for bit in pattern:
        if bit not in (0, 1):
            raise DataError(f"non-binary value {bit!r} in pattern")
        idx = (idx << 1) | int(bit)
    return idx


def decode(index: int, J: int) -> tuple[int, ...]:
    if not 0 <= index < (1 << J):
        raise DataError(f"pattern index {index} out of range for J={J}")
    return tuple((index >> (J - 1 - j)) & 1 for j in range(J))


@lru_cache(maxsize=32)
def _design(J: int) -> np.ndarray:
    idx = np.arange(1 << J, dtype=np.int64)
    shifts = np.arange(J - 1, -1, -1, dtype=np.int64)
    Y = (idx[:, None] >> shifts[None, :]) & 1
    Y.setflags(write=False)
    return Y


def pattern_matrix(J: int) -> np.ndarray:
    """Read-only (2^J, J) int64 matrix; row s is the pattern encoded by s."""
    _check_J(J)
    return _design(J)


def _check_J(J: int) -> None:
    if not 1 <= J <= MAX_J:
        raise DataError(f"J must be in [1, {MAX_J}], got {J}")


# ------------------------------------------------------------------ #
# PatternTable
# ------------------------------------------------------------------ #


@dataclass(frozen=True)
class PatternTable:
    """Observed frequencies over all 2^J binary response patterns."""

    J: int
    counts: np.ndarray

    def __post_init__(self):
        _check_J(self.J)
        counts = np.asarray(self.counts)
        if counts.shape != (1 << self.J,):
            raise DataError(f"expected {1 << self.J} counts for J={self.J}, got shape {counts.shape}")
        if counts.dtype.kind == "f":
            if not np.all(np.isfinite(counts)) or np.any(counts != np.round(counts)):
                raise DataError("counts must be integers")
        elif counts.dtype.kind not in "iub":
            raise DataError(f"counts must be integers, got dtype {counts.dtype}")
        counts = counts.astype(np.int64)
        if np.any(counts < 0):
            raise DataError("counts must be nonnegative")
        if counts.sum() < 1:
            raise DataError("table has no observations")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def N(self) -> int:
        return int(self.counts.sum())

    @property
    def S(self) -> int:
        return 1 << self.J

    def __eq__(self, other):
        if not isinstance(other, PatternTable):
            return NotImplemented
        return self.J == other.J and np.array_equal(self.counts, other.counts)

    def __hash__(self):
        return hash((self.J, self.counts.tobytes()))

    def count(self, pattern: Sequence[int]) -> int:
        if len(pattern) != self.J:
            raise DataError(f"pattern length {len(pattern)} != J={self.J}")
        return int(self.counts[encode(pattern)])

    def nonzero(self) -> dict[str, int]:
        """Bitstring -> count for every observed pattern."""
        return {
            "".join(map(str, decode(int(s), self.J))): int(self.counts[s])
            for s in np.flatnonzero(self.counts)
        }

    def to_rows(self) -> np.ndarray:
        """Expand back to one row per observation (pattern order)."""
        return np.repeat(pattern_matrix(self.J), self.counts, axis=0)

    @classmethod
    def from_counts(cls, J: int, counts: dict[str, int] | Iterable[int]) -> PatternTable:
        if isinstance(counts, dict):
            dense = np.zeros(1 << J, dtype=np.int64)
            for bits, n in counts.items():
                if len(bits) != J:
                    raise DataError(f"pattern {bits!r} has length {len(bits)}, expected {J}")
                dense[encode([int(b) for b in bits])] += n
            return cls(J, dense)
        return cls(J, np.asarray(list(counts)))


def _check_vars(J: int, vars: Sequence[int]) -> list[int]:
    vars = [int(v) for v in vars]
    if not vars:
        raise DataError("variable subset is empty")
    if len(set(vars)) != len(vars):
        raise DataError(f"duplicate variables in {vars}")
    for v in vars:
        if not 1 <= v <= J:
            raise DataError(f"variable index {v} out of range 1..{J}")
    return vars


# ------------------------------------------------------------------ #
# Operations
# ------------------------------------------------------------------ #


def ingest_rows(rows) -> PatternTable:
    arr = [list(r) for r in rows]
    if not arr:
        raise DataError("empty input")
    J = len(arr[0])
    if J < 1:
        raise DataError("rows must have at least one column")
    for i, r in enumerate(arr):
        if len(r) != J:
            raise DataError(f"ragged rows: row {i} has {len(r)} values, expected {J}")
    try:
        Y = np.asarray(arr, dtype=float)
    except (TypeError, ValueError):
        raise DataError("non-binary cell value") from None
    bad = (Y != 0) & (Y != 1)
    if bad.any():
        raise DataError(f"non-binary cell value {Y[bad][0]!r}")
    _check_J(J)
    shifts = np.arange(J - 1, -1, -1, dtype=np.int64)
    idx = (Y.astype(np.int64) << shifts).sum(axis=1)
    return PatternTable(J, np.bincount(idx, minlength=1 << J))


def marginal_prob(table: PatternTable, j: int) -> float:
    """Sample proportion of 1-responses on variable ``j`` (1-based)."""
    (j,) = _check_vars(table.J, [j])
    return float(table.counts @ pattern_matrix(table.J)[:, j - 1]) / table.N


def independence_expected(table: PatternTable, vars: Sequence[int]) -> np.ndarray:
    """Expected frequencies over the sub-patterns of ``vars`` under independence.

    Output is indexed by the encoding of the sub-pattern, in the order given.
    """
    vars = _check_vars(table.J, vars)
    p = np.array([marginal_prob(table, v) for v in vars])
    T = pattern_matrix(len(vars))
    probs = np.where(T == 1, p, 1.0 - p).prod(axis=1)
    return table.N * probs


def collapse(table: PatternTable, vars: Sequence[int]) -> PatternTable:
    vars = _check_vars(table.J, vars)
    Y = pattern_matrix(table.J)[:, [v - 1 for v in vars]]
    k = len(vars)
    sub = (Y << np.arange(k - 1, -1, -1, dtype=np.int64)).sum(axis=1)
    return PatternTable(k, np.bincount(sub, weights=table.counts, minlength=1 << k).astype(np.int64))


# ------------------------------------------------------------------ #
# File formats
# ------------------------------------------------------------------ #


def _is_bitstring(s: str) -> bool:
    return bool(s) and set(s) <= {"0", "1"}


def parse_pattern_counts(text: str) -> PatternTable:
    """Parse ``<bitstring>,<count>`` lines; blank lines and ``#`` comments are ignored."""
    entries: dict[str, int] = {}
    J = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2:
            raise DataError(f"line {lineno}: expected '<bitstring>,<count>', got {raw!r}")
        bits, n = parts
        if not _is_bitstring(bits):
            if J is None and not entries:
                continue  # header
            raise DataError(f"line {lineno}: {bits!r} is not a bitstring")
        try:
            count = int(n)
        except ValueError:
            raise DataError(f"line {lineno}: count {n!r} is not an integer") from None
        if count < 0:
            raise DataError(f"line {lineno}: negative count")
        if J is None:
            J = len(bits)
        elif len(bits) != J:
            raise DataError(f"line {lineno}: pattern {bits!r} has length {len(bits)}, expected {J}")
        entries[bits] = entries.get(bits, 0) + count
    if J is None:
        raise DataError("empty input")
    return PatternTable.from_counts(J, entries)


def parse_rows_csv(text: str) -> PatternTable:
    """Row CSV: optional header, J columns of 0/1, one observation per line."""
    rows = []
    reader = csv.reader(io.StringIO(text))
    for lineno, rec in enumerate(reader, 1):
        rec = [c.strip() for c in rec]
        if not rec or all(c == "" for c in rec):
            continue
        if lineno == 1 and not all(c.lstrip("-").isdigit() for c in rec):
            continue  # header
        try:
            vals = [int(c) for c in rec]
        except ValueError:
            raise DataError(f"line {lineno}: non-integer value in {rec}") from None
        if any(v not in (0, 1) for v in vals):
            raise DataError(f"line {lineno}: non-binary cell value in {rec}")
        rows.append(vals)
    try:
        return ingest_rows(rows)
    except DataError as exc:
        raise DataError(str(exc)) from None


def sniff_format(text: str) -> str:
    """Guess ``counts`` vs ``rows`` from the first data line."""
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) == 2 and _is_bitstring(parts[0]) and len(parts[0]) > 1:
            return "counts"
        if len(parts) == 2 and not _is_bitstring(parts[0]) and not parts[0].lstrip("-").isdigit():
            # header line of a counts file, e.g. "pattern,count"
            if parts[1].lower() in ("count", "n", "freq", "frequency"):
                return "counts"
        return "rows"
    raise DataError("empty input")


def read_table(path: str | Path, fmt: str = "auto") -> PatternTable:
    text = Path(path).read_text()
    if fmt == "auto":
        fmt = sniff_format(text)
    if fmt == "counts":
        return parse_pattern_counts(text)
    if fmt == "rows":
        return parse_rows_csv(text)
    raise ValueError(f"unknown data format {fmt!r}")


def format_pattern_counts(table: PatternTable, include_zeros: bool = False) -> str:
    lines = []
    for s in range(table.S):
        n = int(table.counts[s])
        if n or include_zeros:
            lines.append("".join(map(str, decode(s, table.J))) + f",{n}")
    return "\n".join(lines) + "\n"
