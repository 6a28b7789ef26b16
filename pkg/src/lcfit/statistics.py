"""Data-level fit statistics computed straight from pattern counts.

Every statistic has a batched form that takes a (K, 2^J) integer count
matrix, so thousands of replicate tables are scored in a few array ops.
Expected frequencies always come from the margins of the table being scored.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .contingency import PatternTable, encode, pattern_matrix


class SpecError(ValueError):
    """Unparseable or out-of-range statistic specification."""


class ImpossibleExpectedZero(ValueError):
    pass


# ------------------------------------------------------------------ #
# StatisticSpec
# ------------------------------------------------------------------ #

KINDS = ("pearson", "lr", "pair", "risk", "freq")


@dataclass(frozen=True)
class StatisticSpec:
    """One data-level statistic.

    ``kind`` is ``pearson`` (overall X2), ``lr`` (overall G2), ``pair``
    (X2 of variables ``j``, ``k``), ``risk`` (frequency of patterns with at
    least ``q`` ones) or ``freq`` (frequency of ``pattern``).
    """

    kind: str
    j: int = 0
    k: int = 0
    q: int = 0
    pattern: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown statistic kind {self.kind!r}")
        if self.kind == "pair" and (self.j == self.k or self.j < 1 or self.k < 1):
            raise SpecError(f"pair needs two distinct 1-based variables, got {self.j},{self.k}")
        if self.kind == "risk" and self.q < 0:
            raise SpecError(f"risk threshold must be >= 0, got {self.q}")
        if self.kind == "freq" and (not self.pattern or any(b not in (0, 1) for b in self.pattern)):
            raise SpecError(f"freq needs a binary pattern, got {self.pattern}")

    @property
    def name(self) -> str:
        if self.kind == "pearson":
            return "x2"
        if self.kind == "lr":
            return "g2"
        if self.kind == "pair":
            return f"x2:{self.j},{self.k}"
        if self.kind == "risk":
            return f"risk:{self.q}"
        return "freq:" + "".join(map(str, self.pattern))

    @property
    def is_chi_squared(self) -> bool:
        return self.kind in ("pearson", "lr", "pair")

    def check(self, J: int) -> None:
        if self.kind == "pair" and max(self.j, self.k) > J:
            raise SpecError(f"{self.name}: variable out of range 1..{J}")
        if self.kind == "risk" and self.q > J:
            raise SpecError(f"{self.name}: threshold exceeds J={J}")
        if self.kind == "freq" and len(self.pattern) != J:
            raise SpecError(f"{self.name}: pattern length != J={J}")

    def __str__(self):
        return self.name


def PearsonOverall() -> StatisticSpec:
    return StatisticSpec("pearson")


def LikelihoodRatioOverall() -> StatisticSpec:
    return StatisticSpec("lr")


def PearsonPair(j: int, k: int) -> StatisticSpec:
    return StatisticSpec("pair", j=j, k=k)


def RiskAtLeast(q: int) -> StatisticSpec:
    return StatisticSpec("risk", q=q)


def PatternFrequency(pattern: Sequence[int]) -> StatisticSpec:
    return StatisticSpec("freq", pattern=tuple(int(b) for b in pattern))


def parse_spec(token: str) -> StatisticSpec:
    """Parse ``x2``, ``g2``, ``x2:1,2``, ``risk:3`` or ``freq:1011``."""
    tok = token.strip()
    head, sep, arg = tok.partition(":")
    head = head.lower()
    try:
        if head == "x2" and not sep:
            return PearsonOverall()
        if head == "g2" and not sep:
            return LikelihoodRatioOverall()
        if head == "x2" and sep:
            a, b = arg.split(",")
            return PearsonPair(int(a), int(b))
        if head == "risk" and sep:
            return RiskAtLeast(int(arg))
        if head == "freq" and sep and arg and set(arg) <= {"0", "1"}:
            return PatternFrequency([int(c) for c in arg])
    except (ValueError, SpecError):
        pass
    raise SpecError(f"cannot parse statistic spec {token!r}")


def parse_specs(text: str | Sequence[str]) -> list[StatisticSpec]:
    """Parse a whitespace/semicolon separated list (or a sequence of tokens).

    Commas inside ``x2:j,k`` are part of the token, so tokens are split on
    whitespace and ``;`` only. Errors name every offending token.
    """
    if isinstance(text, str):
        tokens = text.replace(";", " ").split()
    else:
        tokens = [t for item in text for t in item.replace(";", " ").split()]
    specs, bad = [], []
    for t in tokens:
        try:
            specs.append(parse_spec(t))
        except SpecError:
            bad.append(t)
    if bad:
        raise SpecError("cannot parse statistic spec(s): " + ", ".join(repr(b) for b in bad))
    if not specs:
        raise SpecError("no statistic specs given")
    return specs


MI_SPECS = "x2 g2 x2:1,2 x2:1,3 x2:1,4 x2:2,3 x2:2,4 x2:3,4 risk:1 risk:2 risk:3 risk:4"


# ------------------------------------------------------------------ #
# Chi-squared statistics
# ------------------------------------------------------------------ #


def _as_2d(a) -> tuple[np.ndarray, bool]:
    a = np.asarray(a, dtype=float)
    return (a[None, :], True) if a.ndim == 1 else (a, False)


def pearson_x2(observed, expected):
    """Sum of (n - e)^2 / e over cells with e > 0. Works row-wise on 2-D input."""
    n, single = _as_2d(observed)
    e, _ = _as_2d(expected)
    if n.shape[-1] != e.shape[-1]:
        raise ValueError(f"length mismatch: {n.shape[-1]} observed vs {e.shape[-1]} expected")
    if np.any(e < 0):
        raise ValueError("expected frequencies must be nonnegative")
    pos = e > 0
    if np.any((n > 0) & ~pos):
        raise ImpossibleExpectedZero("impossible expected zero: a cell with e=0 has n>0")
    terms = np.divide((n - e) ** 2, e, out=np.zeros(np.broadcast(n, e).shape), where=pos)
    out = terms.sum(axis=-1)
    return float(out[0]) if single else out


def lr_g2(observed, expected):
    """2 * sum n ln(n / e), with 0 ln 0 = 0. Works row-wise on 2-D input."""
    n, single = _as_2d(observed)
    e, _ = _as_2d(expected)
    if n.shape[-1] != e.shape[-1]:
        raise ValueError(f"length mismatch: {n.shape[-1]} observed vs {e.shape[-1]} expected")
    if np.any(e < 0):
        raise ValueError("expected frequencies must be nonnegative")
    occupied = n > 0
    if np.any(occupied & ~(e > 0)):
        raise ImpossibleExpectedZero("impossible expected zero: a cell with e=0 has n>0")
    e = np.broadcast_to(e, n.shape)
    ratio = np.divide(n, e, out=np.ones(n.shape), where=occupied)
    out = 2.0 * (n * np.log(ratio)).sum(axis=-1)
    return float(out[0]) if single else out


def independence_expected_batch(counts: np.ndarray, J: int) -> np.ndarray:
    """Independence expectations for each row of a (K, 2^J) count matrix."""
    counts = np.asarray(counts, dtype=np.int64)
    Y = pattern_matrix(J)
    N = counts.sum(axis=1)
    p = (counts @ Y) / N[:, None]
    probs = np.where(Y[None, :, :] == 1, p[:, None, :], 1.0 - p[:, None, :]).prod(axis=-1)
    return N[:, None] * probs


def pair_counts_batch(counts: np.ndarray, J: int, j: int, k: int) -> np.ndarray:
    """Collapse each row to the 2x2 table of variables ``j``, ``k`` (cells 00, 01, 10, 11)."""
    Y = pattern_matrix(J)
    cell = 2 * Y[:, j - 1] + Y[:, k - 1]
    onehot = (cell[:, None] == np.arange(4)[None, :]).astype(np.int64)
    return np.asarray(counts, dtype=np.int64) @ onehot


# ------------------------------------------------------------------ #
# Count statistics
# ------------------------------------------------------------------ #


def risk_stat(table: PatternTable, Q: int) -> int:
    if not 0 <= Q <= table.J:
        raise SpecError(f"risk threshold {Q} out of range 0..{table.J}")
    return int(evaluate_batch(RiskAtLeast(Q), table.counts[None, :], table.J)[0])


def pattern_freq(table: PatternTable, pattern: Sequence[int]) -> int:
    if len(pattern) != table.J:
        raise SpecError(f"pattern length {len(pattern)} != J={table.J}")
    return int(table.counts[encode(pattern)])


# ------------------------------------------------------------------ #
# Dispatch
# ------------------------------------------------------------------ #


def evaluate_batch(spec: StatisticSpec, counts: np.ndarray, J: int) -> np.ndarray:
    """Value of ``spec`` for every row of a (K, 2^J) count matrix."""
    spec.check(J)
    counts = np.atleast_2d(np.asarray(counts, dtype=np.int64))
    if spec.kind in ("pearson", "lr"):
        e = independence_expected_batch(counts, J)
        f = pearson_x2 if spec.kind == "pearson" else lr_g2
        return np.asarray(f(counts, e), dtype=float).reshape(-1)
    if spec.kind == "pair":
        pc = pair_counts_batch(counts, J, spec.j, spec.k)
        return np.asarray(pearson_x2(pc, independence_expected_batch(pc, 2)), dtype=float).reshape(-1)
    if spec.kind == "risk":
        mask = pattern_matrix(J).sum(axis=1) >= spec.q
        return counts @ mask.astype(np.int64)
    return counts[:, encode(spec.pattern)].copy()


def evaluate(spec: StatisticSpec, table: PatternTable) -> float | int:
    value = evaluate_batch(spec, table.counts[None, :], table.J)[0]
    return float(value) if spec.is_chi_squared else int(value)

