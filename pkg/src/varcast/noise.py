"""Sequencing-error model: probability that a truly present variant is called.

A locus is read a Poisson(depth) number of times; each read survives error
screening independently with probability ``1 - p_err``; the variant is called
when at least ``threshold`` surviving reads are observed. Thinning a Poisson
count binomially leaves a Poisson count at the thinned rate, so the calling
probability collapses to a single Poisson tail at rate ``depth * (1 - p_err)``.
"""
from __future__ import annotations

import warnings

import numpy as np
from scipy.special import gammainc, gammaln

from .core import SequencingConfig


def calling_probability(cfg: SequencingConfig) -> float:
    """P(at least ``threshold`` surviving reads), via the regularized lower
    incomplete gamma function (stable for rates far above the threshold and
    for probabilities near 1)."""
    rate = cfg.depth * (1.0 - cfg.p_err)
    # Pr(Pois(rate) >= T) equals the regularized lower gamma P(T, rate).
    return float(gammainc(cfg.threshold, rate))


def default_t_max(cfg: SequencingConfig) -> int:
    rate = cfg.depth * (1.0 - cfg.p_err)
    return int(np.ceil(rate + 12.0 * np.sqrt(rate) + 40.0))


def calling_probability_naive(cfg: SequencingConfig, t_max: int | None = None) -> float:
    """Direct double sum over total reads t and surviving reads i, truncated
    at ``t_max``. Slow by construction; serves as the independent oracle for
    the thinned single-tail form."""
    if t_max is None:
        t_max = default_t_max(cfg)
    if gammainc(t_max + 1, cfg.depth) >= 1e-14:
        warnings.warn(
            f"t_max={t_max} leaves outer Poisson tail mass >= 1e-14; increase t_max",
            RuntimeWarning,
        )
    T = cfg.threshold
    lam, q = cfg.depth, cfg.p_err
    total = 0.0
    for t in range(T, t_max + 1):
        log_pois = -lam + t * np.log(lam) - gammaln(t + 1)
        if q == 0:
            # only the i == t term is nonzero
            inner = 1.0
        else:
            i = np.arange(T, t + 1)
            log_binom = (
                gammaln(t + 1) - gammaln(i + 1) - gammaln(t - i + 1)
                + i * np.log1p(-q)
                + (t - i) * np.log(q)
            )
            inner = float(np.exp(log_binom).sum())
        total += np.exp(log_pois) * inner
    return float(total)
