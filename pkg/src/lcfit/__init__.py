"""Fit-once resampling tests for binary latent class models."""

from .contingency import (
    DataError,
    PatternTable,
    collapse,
    decode,
    encode,
    independence_expected,
    ingest_rows,
    marginal_prob,
    read_table,
)
from .lcmodel import (
    EmConfig,
    FitResult,
    LCParams,
    all_pattern_probs,
    e_step,
    fit_em,
    init_random,
    log_likelihood,
    m_step,
    pattern_prob,
)

__version__ = "0.1.0"
