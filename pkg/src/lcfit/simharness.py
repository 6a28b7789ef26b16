"""Monte Carlo study of type-I error and power for the fit-once test.

Each repetition draws a dataset from a known latent class model, fits a
``C_fit``-class model, runs the resampling test, and rejects when
``p_upper < alpha``. Repetition ``r`` of a condition is keyed by the
condition's values and ``r``, never by list position or worker.
"""

from __future__ import annotations

import configparser
import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from itertools import product
from pathlib import Path
from typing import Sequence

import numpy as np

from .contingency import PatternTable
from .lcmodel import EmConfig, LCParams, all_pattern_probs, fit_em
from .resampler import TestConfig, run_fit_test, sample_counts
from .seeding import derive_seed, rng_for
from .statistics import StatisticSpec, parse_specs


@dataclass(frozen=True)
class SimCondition:
    C_true: int
    N: int
    hi: float
    J: int = 6
    C_fit: int = 2
    alpha: float = 0.05

    def __post_init__(self):
        if self.C_true not in (2, 3):
            raise ValueError(f"unsupported C_true={self.C_true}; only 2 or 3 generating classes")
        if not 0.5 < self.hi <= 1.0:
            raise ValueError(f"hi must be in (0.5, 1], got {self.hi}")
        if self.N < 1 or self.J < 1 or self.C_fit < 1:
            raise ValueError("N, J and C_fit must be positive")
        if self.C_true == 3 and self.J < 2:
            raise ValueError("three-class layout needs J >= 2")

    @property
    def key(self) -> tuple[int, ...]:
        return (self.C_true, self.N, round(self.hi * 10**6), self.J, self.C_fit)


@dataclass(frozen=True)
class SimResult:
    condition: SimCondition
    spec: str
    rejections: int
    R: int
    K: int
    seed: int

    @property
    def rate(self) -> float:
        return self.rejections / self.R

    @property
    def mc_se(self) -> float:
        return math.sqrt(self.rate * (1.0 - self.rate) / self.R)


def condition_params(cond: SimCondition) -> LCParams:
    """Equal class sizes; class 1 high, class 2 low, class 3 high on the first half only."""
    hi, lo = cond.hi, 1.0 - cond.hi
    rows = [[hi] * cond.J, [lo] * cond.J]
    if cond.C_true == 3:
        half = cond.J // 2
        rows.append([hi] * half + [lo] * (cond.J - half))
    C = cond.C_true
    return LCParams(np.full(C, 1.0 / C), np.array(rows))


def _one_repetition(args) -> list[bool]:
    cond, r, specs, K, em, seed = args
    key = (seed, *cond.key, r)
    cdf = np.cumsum(_all_probs(cond))
    table = PatternTable(cond.J, sample_counts(cdf, cond.N, rng_for((*key, 0))))
    fit = fit_em(table, cond.C_fit, replace(em, seed=derive_seed(*key, 1)))
    report = run_fit_test(table, fit, TestConfig(K, derive_seed(*key, 2), tuple(specs)))
    return [res.p_upper < cond.alpha for res in report.results]


def _all_probs(cond: SimCondition) -> np.ndarray:
    return all_pattern_probs(condition_params(cond))


def run_study(
    conditions: Sequence[SimCondition],
    R: int,
    specs: Sequence[StatisticSpec],
    K: int = 500,
    em: EmConfig | None = None,
    seed: int = 0,
    workers: int = 1,
    progress=None,
) -> list[SimResult]:
    if R < 1:
        raise ValueError("R must be >= 1")
    em = em or EmConfig()
    specs = list(specs)
    for c in conditions:
        for s in specs:
            s.check(c.J)
    jobs = [(c, r, specs, K, em, seed) for c in conditions for r in range(R)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            flags = list(pool.map(_one_repetition, jobs, chunksize=max(1, R // 8)))
    else:
        flags = []
        for i, job in enumerate(jobs):
            flags.append(_one_repetition(job))
            if progress is not None:
                progress(i + 1, len(jobs))
    out = []
    for ci, c in enumerate(conditions):
        block = np.array(flags[ci * R : (ci + 1) * R], dtype=bool).reshape(R, len(specs))
        for si, s in enumerate(specs):
            out.append(SimResult(c, s.name, int(block[:, si].sum()), R, K, seed))
    return out


# ------------------------------------------------------------------ #
# Study config and results files
# ------------------------------------------------------------------ #


@dataclass
class StudyConfig:
    conditions: list[SimCondition]
    R: int
    K: int
    seed: int
    specs: list[StatisticSpec]
    em: EmConfig


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.replace(",", " ").split()]


def parse_study_config(text: str) -> StudyConfig:
    """INI study file.

    ``[study]`` holds R, K, seed, specs, alpha, C_fit, J; ``[conditions]``
    lists C_true, N and hi values whose full cross product is run;
    optional ``[em]`` holds max_iters, tol, n_starts.
    """
    cp = configparser.ConfigParser()
    cp.read_string(text)
    st = cp["study"]
    cond = cp["conditions"]
    if "R" not in st:
        raise ValueError("[study] needs R (repetitions per condition)")
    J = st.getint("J", 6)
    C_fit = st.getint("C_fit", 2)
    alpha = st.getfloat("alpha", 0.05)
    conditions = [
        SimCondition(int(c), int(n), h, J=J, C_fit=C_fit, alpha=alpha)
        for c, n, h in product(_floats(cond["C_true"]), _floats(cond["N"]), _floats(cond["hi"]))
    ]
    em_sec = cp["em"] if cp.has_section("em") else {}
    em = EmConfig(
        max_iters=int(em_sec.get("max_iters", 5000)),
        tol=float(em_sec.get("tol", 1e-10)),
        n_starts=int(em_sec.get("n_starts", 20)),
    )
    return StudyConfig(
        conditions=conditions,
        R=st.getint("R"),
        K=st.getint("K", 500),
        seed=st.getint("seed", 0),
        specs=parse_specs(st.get("specs", "x2 g2 x2:1,2 risk:6")),
        em=em,
    )


def load_study_config(path: str | Path) -> StudyConfig:
    return parse_study_config(Path(path).read_text())


RESULT_FIELDS = ("C_true", "N", "hi", "J", "C_fit", "alpha", "spec", "rejections", "rate", "mc_se", "R", "K", "seed")


def results_csv(results: Sequence[SimResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_FIELDS)
    for res in results:
        c = res.condition
        w.writerow((c.C_true, c.N, repr(c.hi), c.J, c.C_fit, repr(c.alpha), res.spec, res.rejections,
                    f"{res.rate:.6f}", f"{res.mc_se:.6f}", res.R, res.K, res.seed))
    return buf.getvalue()
