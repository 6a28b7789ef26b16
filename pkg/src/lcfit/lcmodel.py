"""Binary latent class model: pattern probabilities and multi-start EM.

All random starts of one ``fit_em`` call are iterated in lockstep as a batch
(leading axis ``b``); each start still follows its own EM trajectory and is
frozen once it converges, so the batch result equals running the starts one
by one. Boundary estimates (0 or 1) are allowed; ``0 ** 0 == 1`` throughout.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .contingency import PatternTable, pattern_matrix
from .seeding import rng_for


class ModelError(ValueError):
    pass


class IdentifiabilityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LCParams:
    """Class proportions ``rho`` (C,) and response-1 probabilities ``pi`` (C, J)."""

    rho: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        rho = np.array(self.rho, dtype=float)
        pi = np.array(self.pi, dtype=float)
        if pi.ndim == 1:
            pi = pi[None, :]
        if rho.ndim != 1 or pi.ndim != 2 or pi.shape[0] != rho.shape[0]:
            raise ModelError(f"shape mismatch: rho {rho.shape}, pi {pi.shape}")
        if rho.size < 1 or pi.shape[1] < 1:
            raise ModelError("need at least one class and one variable")
        if np.any(rho < 0) or abs(rho.sum() - 1.0) > 1e-12:
            raise ModelError(f"class proportions must be nonnegative and sum to 1, got {rho}")
        if np.any(~np.isfinite(pi)) or np.any(pi < 0) or np.any(pi > 1):
            raise ModelError("response probabilities must lie in [0, 1]")
        rho.setflags(write=False)
        pi.setflags(write=False)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "pi", pi)

    @property
    def C(self) -> int:
        return self.rho.shape[0]

    @property
    def J(self) -> int:
        return self.pi.shape[1]

    def permuted(self, order: Sequence[int]) -> LCParams:
        order = list(order)
        return LCParams(self.rho[order], self.pi[order])

    def __eq__(self, other):
        if not isinstance(other, LCParams):
            return NotImplemented
        return np.array_equal(self.rho, other.rho) and np.array_equal(self.pi, other.pi)

    __hash__ = None


@dataclass(frozen=True)
class EmConfig:
    max_iters: int = 5000
    tol: float = 1e-10
    n_starts: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ModelError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ModelError("tol must be > 0")
        if self.n_starts < 1:
            raise ModelError("n_starts must be >= 1")


@dataclass
class FitResult:
    params: LCParams
    loglik: float
    iters: int
    converged: bool
    n_starts_run: int
    overparameterized: bool = False
    start_index: int = 0
    trace: list[float] = field(default_factory=list, repr=False)

    def __eq__(self, other):
        if not isinstance(other, FitResult):
            return NotImplemented
        return (
            self.params == other.params
            and self.loglik == other.loglik
            and self.iters == other.iters
            and self.converged == other.converged
            and self.n_starts_run == other.n_starts_run
            and self.start_index == other.start_index
        )


# ------------------------------------------------------------------ #
# Likelihood
# ------------------------------------------------------------------ #


def _class_cond(pi: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """prod_j pi^y (1-pi)^(1-y) for every pattern and class.

    ``pi`` is (..., C, J), ``Y`` is (M, J); returns (..., M, C).
    """
    y = Y[:, None, :].astype(bool)
    return np.where(y, pi[..., None, :, :], 1.0 - pi[..., None, :, :]).prod(axis=-1)


def pattern_prob(params: LCParams, pattern: Sequence[int]) -> float:
    if len(pattern) != params.J:
        raise ModelError(f"pattern length {len(pattern)} != J={params.J}")
    y = np.asarray(pattern, dtype=bool)
    per_class = np.where(y, params.pi, 1.0 - params.pi).prod(axis=1)
    return float(params.rho @ per_class)


def all_pattern_probs(params: LCParams, J: int | None = None) -> np.ndarray:
    """Probability of every one of the 2^J patterns, in encoding order."""
    if J is not None and J != params.J:
        raise ModelError(f"J={J} does not match params (J={params.J})")
    # Kronecker build keeps variable 1 as the most significant bit.
    probs = np.zeros(1 << params.J)
    for c in range(params.C):
        v = np.ones(1)
        for j in range(params.J):
            p = params.pi[c, j]
            v = np.outer(v, (1.0 - p, p)).ravel()
        probs += params.rho[c] * v
    return probs


def _loglik_from_probs(counts: np.ndarray, probs: np.ndarray) -> float:
    mask = counts > 0
    if np.any(probs[mask] <= 0):
        return -math.inf
    return float(counts[mask] @ np.log(probs[mask]))


def log_likelihood(params: LCParams, table: PatternTable) -> float:
    if params.J != table.J:
        raise ModelError(f"params J={params.J} != table J={table.J}")
    return _loglik_from_probs(table.counts, all_pattern_probs(params))


def e_step(params: LCParams, table: PatternTable) -> tuple[np.ndarray, np.ndarray]:
    """Posterior class membership for every pattern.

    Returns ``(post, zero_rows)``: ``post`` is (S, C); ``zero_rows`` marks
    patterns with model probability 0, whose rows are set to ``rho``.
    """
    if params.J != table.J:
        raise ModelError(f"params J={params.J} != table J={table.J}")
    joint = params.rho * _class_cond(params.pi, pattern_matrix(table.J))
    marg = joint.sum(axis=1, keepdims=True)
    zero = marg[:, 0] <= 0
    post = np.divide(joint, marg, out=np.tile(params.rho, (joint.shape[0], 1)), where=~zero[:, None])
    return post, zero


def m_step(posteriors: np.ndarray, table: PatternTable, previous: LCParams | None = None) -> LCParams:
    """Weighted-count update. Classes with zero mass keep ``previous``'s pi row (0.5 if none)."""
    post = np.asarray(posteriors, dtype=float)
    if post.shape[0] != table.S:
        raise ModelError(f"posterior has {post.shape[0]} rows, table has {table.S} patterns")
    w = table.counts[:, None] * post
    mass = w.sum(axis=0)
    rho = mass / table.N
    num = w.T @ pattern_matrix(table.J)
    empty = mass <= 0
    fallback = previous.pi if previous is not None else np.full(num.shape, 0.5)
    pi = np.divide(num, mass[:, None], out=np.array(fallback, dtype=float), where=~empty[:, None])
    return LCParams(rho / rho.sum(), np.clip(pi, 0.0, 1.0))


# ------------------------------------------------------------------ #
# Estimation
# ------------------------------------------------------------------ #


def init_random(C: int, J: int, seed) -> LCParams:
    if C < 1 or J < 1:
        raise ModelError("C and J must be >= 1")
    rng = rng_for(seed)
    pi = rng.uniform(0.05, 0.95, size=(C, J))
    rho = rng.uniform(0.5, 1.5, size=C)
    return LCParams(rho / rho.sum(), pi)


def n_free_params(C: int, J: int) -> int:
    return C * (J + 1) - 1


def fit_em(
    table: PatternTable,
    C: int,
    config: EmConfig | None = None,
    init: Sequence[LCParams] = (),
) -> FitResult:
    """Maximum likelihood by EM from ``config.n_starts`` starts; best final loglik wins.

    Start ``i`` is seeded from ``(config.seed, i)``. Explicit ``init`` params
    replace the first starts (used for warm starts). Ties go to the lowest index.
    """
    config = config or EmConfig()
    if C < 1:
        raise ModelError(f"number of classes must be >= 1, got {C}")
    J = table.J
    over = n_free_params(C, J) > table.S - 1
    if over:
        warnings.warn(
            f"{C}-class model has {n_free_params(C, J)} free parameters but only "
            f"{table.S - 1} degrees of freedom in the table",
            IdentifiabilityWarning,
            stacklevel=2,
        )

    starts = list(init)[: config.n_starts]
    for p in starts:
        if p.C != C or p.J != J:
            raise ModelError("initial params have the wrong shape")
    starts += [init_random(C, J, (config.seed, i)) for i in range(len(starts), config.n_starts)]
    B = len(starts)

    # EM over observed patterns only; zero-count patterns do not enter the likelihood.
    obs = np.flatnonzero(table.counts)
    Y = pattern_matrix(J)[obs]
    n = table.counts[obs].astype(float)
    N = n.sum()
    Yf = Y.astype(float)

    rho = np.stack([p.rho for p in starts])
    pi = np.stack([p.pi for p in starts])

    def loglik_and_post(rho, pi):
        joint = rho[:, None, :] * _class_cond(pi, Y)
        marg = joint.sum(axis=2)
        with np.errstate(divide="ignore"):
            ll = np.log(marg) @ n
        zero = marg <= 0
        post = np.divide(joint, marg[..., None], out=np.broadcast_to(rho[:, None, :], joint.shape).copy(),
                         where=~zero[..., None])
        return ll, post

    ll, post = loglik_and_post(rho, pi)
    traces = [[float(x)] for x in ll]
    active = np.ones(B, dtype=bool)
    converged = np.zeros(B, dtype=bool)
    iters = np.zeros(B, dtype=int)

    for _ in range(config.max_iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        w = n[None, :, None] * post[idx]
        mass = w.sum(axis=1)
        new_rho = mass / N
        new_rho /= new_rho.sum(axis=1, keepdims=True)
        num = np.einsum("bmc,mj->bcj", w, Yf)
        new_pi = np.divide(num, mass[..., None], out=pi[idx].copy(), where=mass[..., None] > 0)
        np.clip(new_pi, 0.0, 1.0, out=new_pi)

        new_ll, new_post = loglik_and_post(new_rho, new_pi)
        rho[idx], pi[idx], post[idx] = new_rho, new_pi, new_post
        improvement = new_ll - ll[idx]
        ll[idx] = new_ll
        iters[idx] += 1
        for b, v in zip(idx, new_ll):
            traces[b].append(float(v))
        done = improvement < config.tol
        converged[idx[done]] = True
        active[idx[done]] = False

    best = int(np.argmax(ll))
    params = LCParams(rho[best] / rho[best].sum(), pi[best])
    return FitResult(
        params=params,
        loglik=log_likelihood(params, table),
        iters=int(iters[best]),
        converged=bool(converged[best]),
        n_starts_run=B,
        overparameterized=over,
        start_index=best,
        trace=traces[best],
    )


def match_classes(params: LCParams, reference: LCParams) -> LCParams:
    """Permute ``params`` classes to best align with ``reference`` (min squared pi distance)."""
    from itertools import permutations

    if params.C != reference.C:
        raise ModelError("class counts differ")
    best = min(
        permutations(range(params.C)),
        key=lambda order: float(np.sum((params.pi[list(order)] - reference.pi) ** 2)),
    )
    return params.permuted(best)


# ------------------------------------------------------------------ #
# Serialization
# ------------------------------------------------------------------ #


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def dumps(params: LCParams, loglik: float | None = None) -> str:
    lines = [f"C {params.C}", f"J {params.J}", "rho " + " ".join(_fmt(r) for r in params.rho)]
    if loglik is not None:
        lines.append(f"loglik {_fmt(loglik)}")
    lines.append("pi")
    lines += [" ".join(_fmt(v) for v in row) for row in params.pi]
    return "\n".join(lines) + "\n"


def loads(text: str) -> LCParams:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    keys: dict[str, str] = {}
    pi_rows: list[list[float]] = []
    in_pi = False
    try:
        for ln in lines:
            if in_pi:
                pi_rows.append([float(v) for v in ln.split()])
                continue
            key, _, rest = ln.partition(" ")
            if key == "pi":
                in_pi = True
                if rest.strip():
                    raise ModelError("'pi' must be followed by C lines of J values")
                continue
            keys[key] = rest.strip()
        C, J = int(keys["C"]), int(keys["J"])
        rho = [float(v) for v in keys["rho"].split()]
    except (KeyError, ValueError) as exc:
        raise ModelError(f"malformed model file: {exc}") from None
    if len(rho) != C or len(pi_rows) != C or any(len(r) != J for r in pi_rows):
        raise ModelError(f"model file dimensions do not match C={C}, J={J}")
    return LCParams(np.array(rho), np.array(pi_rows))

