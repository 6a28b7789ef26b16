"""Fit-once resampling test.

The model is estimated once; ``K`` replicate tables are drawn from the
fitted pattern probabilities and every statistic is recomputed on each
replicate, with expectations taken from the replicate's own margins.
Replicate ``k`` (1-based) is drawn from the stream keyed ``(seed, k)``, so
reports do not depend on the number of worker threads.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .contingency import PatternTable
from .lcmodel import FitResult, LCParams, ModelError, all_pattern_probs
from .seeding import rng_for
from .statistics import StatisticSpec, evaluate, evaluate_batch, parse_spec

CHUNK = 256
SPILL_THRESHOLD = 100_000


@dataclass(frozen=True)
class TestConfig:
    K: int = 1000
    seed: int = 0
    specs: tuple[StatisticSpec, ...] = ()

    __test__ = False

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if not self.specs:
            raise ValueError("at least one statistic spec is required")
        object.__setattr__(self, "specs", tuple(self.specs))


@dataclass
class SpecResult:
    spec: StatisticSpec
    observed: float
    replicates: np.ndarray = field(repr=False)
    p_upper: float
    p_lower: float

    @property
    def name(self) -> str:
        return self.spec.name


@dataclass
class TestReport:
    results: list[SpecResult]
    K: int
    seed: int
    model: dict = field(default_factory=dict)

    __test__ = False

    def __getitem__(self, name: str) -> SpecResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "seed": self.seed,
            "model": self.model,
            "statistics": [
                {
                    "name": r.name,
                    "observed": r.observed,
                    "p_upper": r.p_upper,
                    "p_lower": r.p_lower,
                    "K": self.K,
                    "seed": self.seed,
                }
                for r in self.results
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def replicates_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("k", "spec", "value"))
        for r in self.results:
            w.writerows((k, r.name, _num(v)) for k, v in enumerate(r.replicates, 1))
        return buf.getvalue()

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("name", "observed", "p_upper", "p_lower", "K", "seed"))
        for r in self.results:
            w.writerow((r.name, _num(r.observed), repr(r.p_upper), repr(r.p_lower), self.K, self.seed))
        return buf.getvalue()


def _num(v) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def model_summary(params: LCParams, loglik: float | None = None) -> dict:
    out = {"C": params.C, "J": params.J, "rho": params.rho.tolist(), "pi": params.pi.tolist()}
    if loglik is not None:
        out["loglik"] = loglik
    return out


# ------------------------------------------------------------------ #
# Sampling
# ------------------------------------------------------------------ #


def sample_counts(cdf: np.ndarray, N: int, rng: np.random.Generator) -> np.ndarray:
    """Multinomial(N, p) counts by inverse-CDF lookup of N uniforms."""
    u = rng.random(N) * cdf[-1]
    idx = np.searchsorted(cdf, u, side="right")
    np.minimum(idx, cdf.size - 1, out=idx)
    return np.bincount(idx, minlength=cdf.size)


def generate_replicate(params: LCParams, N: int, seed) -> PatternTable:
    if N < 1:
        raise ValueError("N must be >= 1")
    cdf = np.cumsum(all_pattern_probs(params))
    return PatternTable(params.J, sample_counts(cdf, N, rng_for(seed)))


def _replicate_block(cdf, N, seed, ks) -> np.ndarray:
    return np.stack([sample_counts(cdf, N, rng_for((seed, k))) for k in ks])


# ------------------------------------------------------------------ #
# p-values
# ------------------------------------------------------------------ #


def empirical_p(replicates: np.ndarray, observed: float) -> tuple[float, float]:
    """(fraction of replicates >= observed, fraction <= observed); ties count in both."""
    K = len(replicates)
    return int(np.count_nonzero(replicates >= observed)) / K, int(np.count_nonzero(replicates <= observed)) / K


def _replicate_store(K: int, n_specs: int, spill_dir: str | None):
    if K <= SPILL_THRESHOLD:
        return np.empty((n_specs, K))
    fd, path = tempfile.mkstemp(suffix=".npy", dir=spill_dir)
    os.close(fd)
    return np.lib.format.open_memmap(path, mode="w+", dtype=float, shape=(n_specs, K))


def run_fit_test(
    table: PatternTable,
    fit: FitResult | LCParams,
    config: TestConfig,
    threads: int = 1,
    spill_dir: str | None = None,
) -> TestReport:
    params = fit.params if isinstance(fit, FitResult) else fit
    if params.J != table.J:
        raise ModelError(f"model J={params.J} does not match data J={table.J}")
    specs = list(config.specs)
    for s in specs:
        s.check(table.J)
    N, K = table.N, config.K
    cdf = np.cumsum(all_pattern_probs(params))

    blocks = [range(lo, min(lo + CHUNK, K + 1)) for lo in range(1, K + 1, CHUNK)]
    values = _replicate_store(K, len(specs), spill_dir)

    def work(ks):
        counts = _replicate_block(cdf, N, config.seed, ks)
        return ks, [evaluate_batch(s, counts, table.J) for s in specs]

    def collect(item):
        ks, vals = item
        for i, v in enumerate(vals):
            values[i, ks.start - 1 : ks.stop - 1] = v

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for item in pool.map(work, blocks):
                collect(item)
    else:
        for ks in blocks:
            collect(work(ks))

    results = []
    for i, s in enumerate(specs):
        obs = evaluate(s, table)
        p_up, p_lo = empirical_p(values[i], obs)
        results.append(SpecResult(s, obs, values[i], p_up, p_lo))
    loglik = fit.loglik if isinstance(fit, FitResult) else None
    return TestReport(results, K, config.seed, model_summary(params, loglik))


# ------------------------------------------------------------------ #
# Histogram export
# ------------------------------------------------------------------ #


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    observed: float

    def to_csv(self) -> str:
        lines = ["bin_low,bin_high,count"]
        for lo, hi, n in zip(self.edges[:-1], self.edges[1:], self.counts):
            lines.append(f"{lo!r},{hi!r},{int(n)}")
        lines.append(f"observed,{float(self.observed)!r},")
        return "\n".join(lines) + "\n"


def histogram_export(report: TestReport, spec: StatisticSpec | str, bins: int = 20) -> Histogram:
    name = spec if isinstance(spec, str) else spec.name
    res = report[name]
    if res.replicates is None or len(res.replicates) != report.K:
        raise ValueError(f"replicate values for {name} were not retained")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    vals = np.asarray(res.replicates, dtype=float)
    counts, edges = np.histogram(vals, bins=bins)
    return Histogram(edges, counts, res.observed)


def as_specs(specs: Sequence[StatisticSpec | str]) -> tuple[StatisticSpec, ...]:
    return tuple(parse_spec(s) if isinstance(s, str) else s for s in specs)
