"""Comparison estimators that predict new-variant counts from the site
frequency spectrum alone: a parametric beta-Bernoulli model, harmonic
jackknife extrapolation with data-driven order selection, and the smoothed
Good-Toulmin estimator.

All estimators here assume observation conditions stay unchanged between the
pilot and the follow-up.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from math import comb

import numpy as np
from scipy.optimize import minimize
from scipy.special import betaln, digamma, gammaln, logsumexp
from scipy.stats import binom, norm

from .core import InvalidInputError, NumericalError, SiteFrequencySpectrum

logger = logging.getLogger(__name__)

_A_CLAMP = 1e-8
_NM_RESTART_GRID = ((1e-3, 0.05, 1.0), (0.5, 5.0, 50.0))


@dataclass(frozen=True)
class BetaBernoulliFit:
    a: float
    b: float
    loglik: float


def bb_loglik(sfs: SiteFrequencySpectrum, a: float, b: float) -> float:
    """Log likelihood of the observed fingerprint under i.i.d. Beta(a, b)
    variant frequencies, with occupancy probabilities renormalized over the
    observable range 1..N."""
    if a <= 0 or b <= 0:
        raise InvalidInputError(f"shape parameters must be positive, got a={a}, b={b}")
    if not sfs.counts:
        return 0.0
    N = sfs.n
    j = np.arange(1, N + 1, dtype=float)
    log_p = (
        gammaln(N + 1) - gammaln(j + 1) - gammaln(N - j + 1)
        + gammaln(a + j) - gammaln(a)
        + gammaln(b + N - j) - gammaln(b)
        - (gammaln(a + b + N) - gammaln(a + b))
    )
    log_norm = logsumexp(log_p)
    total = 0.0
    for r, f in sfs.counts.items():
        if f:
            total += f * (log_p[r - 1] - log_norm)
    return float(total)


def bb_fit(sfs: SiteFrequencySpectrum) -> BetaBernoulliFit:
    """Maximize the beta-Bernoulli log likelihood over (log a, log b) with
    Nelder-Mead from a 3x3 grid of restarts. Deterministic."""
    if not sfs.counts:
        raise InvalidInputError("cannot fit an empty site-frequency spectrum")

    def neg(z: np.ndarray) -> float:
        return -bb_loglik(sfs, float(np.exp(z[0])), float(np.exp(z[1])))

    best = None
    for a0 in _NM_RESTART_GRID[0]:
        for b0 in _NM_RESTART_GRID[1]:
            res = minimize(
                neg,
                np.log([a0, b0]),
                method="Nelder-Mead",
                options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 2000},
            )
            if best is None or res.fun < best.fun:
                best = res
    a, b = float(np.exp(best.x[0])), float(np.exp(best.x[1]))
    if a < _A_CLAMP:
        warnings.warn(
            f"beta-Bernoulli fit drove a to {a:.3g}; clamping at {_A_CLAMP}", RuntimeWarning
        )
        a = _A_CLAMP
    return BetaBernoulliFit(a=a, b=b, loglik=bb_loglik(sfs, a, b))


def bb_predict(sfs: SiteFrequencySpectrum, m: int, fit: BetaBernoulliFit) -> float:
    """Expected new variants in m further samples under the fitted
    beta-Bernoulli model, anchored on the singleton count."""
    if m < 0:
        raise InvalidInputError("extrapolation size must be non-negative")
    if m == 0:
        return 0.0
    f1 = sfs.counts.get(1, 0)
    if f1 == 0:
        return 0.0
    N, a, b = sfs.n, fit.a, fit.b
    ratio = np.exp(betaln(a, N + m + b) - betaln(a, N + b))
    return float(f1 / a * (N + b - 1.0) / N * (1.0 - ratio))


# ---------------------------------------------------------------------------
# Harmonic jackknife
# ---------------------------------------------------------------------------

def jackknife_population_size(sfs: SiteFrequencySpectrum, p: int) -> float:
    """Order-p jackknife estimate of the total number of variant columns in
    the population (the classic capture-recapture richness estimator)."""
    N, J = sfs.n, sfs.distinct
    if not (1 <= p <= min(10, N - 1)):
        raise InvalidInputError(f"jackknife order {p} outside 1..{min(10, N - 1)}")
    f = sfs.as_array(r_max=p)

    def drop_avg(ell: int) -> float:
        # average of J over all sample subsets that drop ell samples
        if ell == 0:
            return float(J)
        i = np.arange(1, ell + 1)
        log_w = (
            gammaln(N - i + 1) - gammaln(ell - i + 1)
            - gammaln(N + 1) + gammaln(ell + 1)
        )
        return float(J - np.sum(np.exp(log_w) * f[1:ell + 1]))

    total = 0.0
    for ell in range(p + 1):
        total += (-1.0) ** ell * comb(p, ell) * float(N - ell) ** p * drop_avg(ell)
    return total / p


def _harmonic_gap(n_hi: int, n_lo: int) -> float:
    """H_{n_hi - 1} - H_{n_lo - 1}, via digamma."""
    return float(digamma(n_hi) - digamma(n_lo))


def _jackknife_weights(sfs: SiteFrequencySpectrum, m: int, p: int) -> np.ndarray:
    """Fingerprint weights w with prediction = sum_r w_r f_r (w_r = 1 for
    r > p). Solving the p x p order-matching system expresses the curve
    coefficients as linear functions of f_1..f_p."""
    N = sfs.n
    if not (1 <= p <= min(10, N - 1)):
        raise InvalidInputError(f"jackknife order {p} outside 1..{min(10, N - 1)}")
    delta0 = _harmonic_gap(N + m, N)
    S = np.empty((p, p))
    L = np.zeros((p, p))
    for j in range(1, p + 1):
        dj = _harmonic_gap(N + m, N - j)
        for ell in range(1, p + 1):
            S[j - 1, ell - 1] = dj ** ell - delta0 ** ell
        for i in range(1, j + 1):
            L[j - 1, i - 1] = np.exp(
                gammaln(j + 1) - gammaln(i + 1) - gammaln(j - i + 1)
                - (gammaln(N + 1) - gammaln(i + 1) - gammaln(N - i + 1))
            )
    cond = np.linalg.cond(S)
    if cond > 1e10:
        logger.warning("jackknife order %d system condition number %.3g", p, cond)
    try:
        coef_map = np.linalg.solve(S, L)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"jackknife order {p} system is singular") from exc
    deltas = delta0 ** np.arange(1, p + 1)
    weights = np.ones(N + 1)
    weights[0] = 0.0
    weights[1:p + 1] += deltas @ coef_map
    return weights


def jackknife_predict(sfs: SiteFrequencySpectrum, m: int, p: int) -> float:
    """Order-p harmonic-jackknife prediction of the total variant count after
    m further samples (pilot variants included)."""
    if m < 0:
        raise InvalidInputError("extrapolation size must be non-negative")
    if m == 0:
        return float(sfs.distinct)
    weights = _jackknife_weights(sfs, m, p)
    f = sfs.as_array()
    return float(weights @ f)


def jackknife_predict_curve(sfs: SiteFrequencySpectrum, ms: np.ndarray, p: int) -> np.ndarray:
    """Vectorized order-p predictions over many extrapolation sizes: the
    order-matching systems are assembled and solved in a single batch."""
    N = sfs.n
    if not (1 <= p <= min(10, N - 1)):
        raise InvalidInputError(f"jackknife order {p} outside 1..{min(10, N - 1)}")
    ms = np.asarray(ms, dtype=np.int64)
    out = np.full(ms.shape, float(sfs.distinct))
    pos = ms > 0
    if not np.any(pos):
        return out
    mpos = ms[pos]
    d0 = digamma(N + mpos) - digamma(N)                      # (M,)
    dj = digamma(N + mpos)[:, None] - digamma(N - np.arange(1, p + 1))[None, :]  # (M, p)
    ells = np.arange(1, p + 1)
    S = dj[:, :, None] ** ells[None, None, :] - d0[:, None, None] ** ells[None, None, :]
    L = np.zeros((p, p))
    for j in range(1, p + 1):
        i = np.arange(1, j + 1)
        L[j - 1, :j] = np.exp(
            gammaln(j + 1) - gammaln(i + 1) - gammaln(j - i + 1)
            - (gammaln(N + 1) - gammaln(i + 1) - gammaln(N - i + 1))
        )
    try:
        x = np.linalg.solve(
            np.swapaxes(S, 1, 2), (d0[:, None] ** ells[None, :])[..., None]
        )[..., 0]
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"jackknife order {p} system is singular") from exc
    w_add = x @ L  # (M, p): additive fingerprint weights on f_1..f_p
    f = sfs.as_array(r_max=p)[1:]
    out[pos] = sfs.distinct + w_add @ f
    return out


def jackknife_order_select(
    sfs: SiteFrequencySpectrum,
    m: int,
    alpha_level: float = 0.05,
    p_max: int = 5,
) -> int:
    """Data-driven jackknife order: sequentially test whether raising the
    order changes the prediction more than its estimated standard error
    warrants; pick the first order where the (normal, two-sided) test fails
    to reject."""
    N, J = sfs.n, sfs.distinct
    p_max = min(p_max, min(10, N - 1) - 1)
    if J < 2 or p_max < 1:
        warnings.warn("degenerate spectrum; defaulting to jackknife order 1", RuntimeWarning)
        return 1
    f = sfs.as_array()
    z_crit = norm.ppf(1.0 - alpha_level / 2.0)
    for p in range(1, p_max + 1):
        try:
            w_lo = _jackknife_weights(sfs, m, p)
            w_hi = _jackknife_weights(sfs, m, p + 1)
        except NumericalError:
            warnings.warn(f"jackknife order {p} skipped: singular system", RuntimeWarning)
            continue
        contrast = w_hi - w_lo
        diff = float(contrast @ f)
        var = J / (J - 1.0) * (float(contrast**2 @ f) - diff**2 / J)
        if var <= 0.0:
            warnings.warn(f"jackknife order {p} skipped: variance estimate <= 0", RuntimeWarning)
            continue
        t_stat = diff / np.sqrt(var)
        if abs(t_stat) <= z_crit:
            return p
    warnings.warn(f"jackknife order selection capped at {p_max}", RuntimeWarning)
    return p_max


# ---------------------------------------------------------------------------
# Smoothed Good-Toulmin
# ---------------------------------------------------------------------------

def good_toulmin(
    sfs: SiteFrequencySpectrum,
    m: int,
    base: str = "log2",
    r_max: int | None = None,
) -> float:
    """Good-Toulmin prediction of new variants in m further samples: the
    alternating fingerprint series in t = m/N, binomially smoothed when the
    extrapolation exceeds the pilot size."""
    if m < 0:
        raise InvalidInputError("extrapolation size must be non-negative")
    if base not in ("log2", "log3"):
        raise InvalidInputError(f"smoothing base must be log2 or log3, got {base!r}")
    if m == 0 or not sfs.counts:
        return 0.0
    N = sfs.n
    r_max = N if r_max is None else min(r_max, N)
    t = m / N
    rs = np.array([r for r in sorted(sfs.counts) if r <= r_max and sfs.counts[r]], dtype=np.int64)
    if rs.size == 0:
        return 0.0
    fs = np.array([sfs.counts[int(r)] for r in rs], dtype=float)
    signs = np.where(rs % 2 == 1, 1.0, -1.0)
    terms = signs * t ** rs.astype(float) * fs
    if t <= 1.0:
        return float(terms.sum())
    arg = (m**2 / N) / (t - 1.0)
    if base == "log2":
        kappa = int(np.floor(0.5 * np.log2(arg)))
        theta = 1.0 / (t + 1.0)
    else:
        kappa = int(np.floor(0.5 * np.log(arg) / np.log(3.0)))
        theta = 2.0 / (t + 2.0)
    kappa = max(kappa, 0)
    smooth = binom.sf(rs - 1, kappa, theta)
    return float((terms * smooth).sum())
