"""Posterior predictive means and distributions for new-variant counts under
the three-parameter beta process, with and without imperfect variant calling.

Conditioned on a pilot of size N, the number of previously unseen variants
appearing in M further samples is Poisson. Its rate is a sum of rising
factorial ratios (perfect observation) or of expectations over a beta
distribution (imperfect observation, where each truly present variant is
called with study-specific probability phi). All gamma-ratio products are
evaluated in log space; exponentiation happens once per term.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln, roots_legendre
from scipy.stats import poisson

from .core import BPHyperParams, InvalidInputError, NumericalError

_REL_TOL = 1e-10
_ORDER_CAP = 512


class QuadratureError(NumericalError):
    """Quadrature failed to converge; carries the last two estimates."""

    def __init__(self, message: str, last_two: tuple[float, float]):
        super().__init__(f"{message} (last two estimates: {last_two[0]!r}, {last_two[1]!r})")
        self.last_two = last_two


def log_rising(a: float, b: int) -> float:
    """log of the rising factorial a(a+1)...(a+b-1), i.e.
    log Gamma(a+b) - log Gamma(a). Requires a > 0."""
    if a <= 0:
        raise InvalidInputError(f"rising factorial requires a positive base, got a={a}")
    if b < 0:
        raise InvalidInputError(f"rising factorial requires b >= 0, got b={b}")
    return float(gammaln(a + b) - gammaln(a))


def _log_new_variant_rates(n: int, m_max: int, p: BPHyperParams) -> np.ndarray:
    """log rate of a new variant appearing in sample n+m, for m = 1..m_max."""
    m = np.arange(1, m_max + 1, dtype=np.float64)
    return (
        np.log(p.alpha)
        + gammaln(p.c + p.sigma + n + m - 1)
        - gammaln(p.c + p.sigma)
        - gammaln(p.c + n + m)
        + gammaln(p.c + 1)
    )


def expected_new_variants_curve(n: int, m_max: int, p: BPHyperParams) -> np.ndarray:
    """Cumulative expected new-variant counts for m = 1..m_max (perfect
    observation)."""
    if m_max == 0:
        return np.zeros(0)
    return np.cumsum(np.exp(_log_new_variant_rates(n, m_max, p)))


def expected_new_variants(n: int, m: int, p: BPHyperParams) -> float:
    """Expected number of variants absent from a pilot of n samples that
    appear in m follow-up samples. Zero when m == 0."""
    if n < 0 or m < 0:
        raise InvalidInputError("sample counts must be non-negative")
    if m == 0:
        return 0.0
    return float(np.exp(_log_new_variant_rates(n, m, p)).sum())


@dataclass(frozen=True)
class PoissonPrediction:
    """Posterior predictive for a count: Poisson with the given rate."""

    mean: float

    def quantile(self, q: float) -> int:
        if not (0.0 < q < 1.0):
            raise InvalidInputError(f"quantile level must lie in (0, 1), got {q}")
        if self.mean == 0.0:
            return 0
        return int(poisson.ppf(q, self.mean))

    def interval(self, level: float = 0.95) -> tuple[int, int]:
        half = (1.0 - level) / 2.0
        return self.quantile(half), self.quantile(1.0 - half)


def new_variants_posterior(n: int, m: int, p: BPHyperParams) -> PoissonPrediction:
    return PoissonPrediction(expected_new_variants(n, m, p))


def expected_new_rare(n: int, m: int, r: int, p: BPHyperParams) -> float:
    """Expected number of new variants occurring exactly r times among m
    follow-up samples."""
    if not (1 <= r <= m):
        raise InvalidInputError(f"occurrence count r={r} outside 1..{m}")
    log_choose = gammaln(m + 1) - gammaln(r + 1) - gammaln(m - r + 1)
    log_rate = (
        np.log(p.alpha)
        + log_choose
        + log_rising(1.0 - p.sigma, r - 1)
        + log_rising(p.c + p.sigma, n + m - r)
        - log_rising(p.c + 1.0, n + m - 1)
    )
    return float(np.exp(log_rate))


def expected_new_rare_cum(n: int, m: int, r_cap: int, p: BPHyperParams) -> float:
    """Expected number of new variants occurring at most r_cap times among m
    follow-up samples."""
    if not (1 <= r_cap <= m):
        raise InvalidInputError(f"cumulative cap R={r_cap} outside 1..{m}")
    r = np.arange(1, r_cap + 1, dtype=np.float64)
    log_choose = gammaln(m + 1) - gammaln(r + 1) - gammaln(m - r + 1)
    log_rates = (
        np.log(p.alpha)
        + log_choose
        + gammaln(1.0 - p.sigma + r - 1) - gammaln(1.0 - p.sigma)
        + gammaln(p.c + p.sigma + n + m - r) - gammaln(p.c + p.sigma)
        - (gammaln(p.c + 1.0 + n + m - 1) - gammaln(p.c + 1.0))
    )
    return float(np.exp(log_rates).sum())


def asymptotic_xi(p: BPHyperParams) -> float:
    """Almost-sure limit of (new variants)/M^sigma as the follow-up grows."""
    if p.sigma == 0:
        raise InvalidInputError("power-law limit undefined at sigma = 0")
    return float(p.alpha / p.sigma * np.exp(gammaln(p.c + 1) - gammaln(p.c + p.sigma)))


def asymptotic_xi_r(p: BPHyperParams, r: int) -> float:
    """Almost-sure limit of (new variants seen exactly r times)/M^sigma."""
    if p.sigma == 0:
        raise InvalidInputError("power-law limit undefined at sigma = 0")
    if r < 1:
        raise InvalidInputError(f"occurrence count r must be >= 1, got {r}")
    log_val = (
        np.log(p.alpha)
        - gammaln(r + 1)
        + log_rising(1.0 - p.sigma, r - 1)
        + gammaln(p.c + 1)
        - gammaln(p.c + p.sigma)
    )
    return float(np.exp(log_val))


# ---------------------------------------------------------------------------
# Beta-weighted quadrature
# ---------------------------------------------------------------------------

_B_FOLD = 1000.0  # beyond this, treat the (1-theta) factor on decay-matched segments


def _jacobi_rule(order: int, alpha: float, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Jacobi nodes on [-1, 1] for the weight (1-x)^alpha (1+x)^beta,
    by diagonalizing the symmetric recurrence matrix (Golub-Welsch). Stays
    accurate for near-singular exponents, where library Newton iterations
    lose many digits. Weights are returned normalized to sum 1."""
    k = np.arange(order, dtype=float)
    ab = alpha + beta
    with np.errstate(invalid="ignore", divide="ignore"):
        diag = (beta**2 - alpha**2) / ((2 * k + ab) * (2 * k + ab + 2))
    diag[0] = (beta - alpha) / (ab + 2.0)
    kk = np.arange(1, order, dtype=float)
    off = np.sqrt(
        4 * kk * (kk + alpha) * (kk + beta) * (kk + ab)
        / ((2 * kk + ab) ** 2 * (2 * kk + ab + 1) * (2 * kk + ab - 1))
    )
    if order > 1:
        # k = 1 entry with the (1 + ab) factor cancelled; the raw quotient is
        # 0/0 when a + b = 1
        off[0] = np.sqrt(4 * (1 + alpha) * (1 + beta) / ((2 + ab) ** 2 * (3 + ab)))
    nodes, vectors = eigh_tridiagonal(diag, off)
    w = vectors[0] ** 2
    return nodes, w / w.sum()


@lru_cache(maxsize=32)
def _legendre_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = roots_legendre(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _beta_nodes(a: float, b: float, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes in (0,1) and weights (summing to 1) for integrating smooth
    functions against a Beta(a, b) density. For very large b the mass sits on
    the 1/b scale, so decay-matched segments replace the single rule."""
    if b > _B_FOLD:
        return _subdivided_beta_nodes(a, b, 1.0 / b, order)
    x, w = _jacobi_rule(order, b - 1.0, a - 1.0)
    return 0.5 * (x + 1.0), w


def _poly_exact_order(degree: int) -> int:
    """Smallest Gauss order integrating polynomials of the given degree
    exactly (an order-n rule is exact through degree 2n-1)."""
    return max(4, degree // 2 + 1)


def _escalation_orders(degree: int) -> list[int]:
    """Order ladder for successive-estimate comparison, starting at the
    polynomial-exactness order and doubling up to the cap."""
    start = _poly_exact_order(degree)
    if start >= _ORDER_CAP:
        return [_ORDER_CAP // 2, _ORDER_CAP]
    orders = [start]
    while orders[-1] < _ORDER_CAP:
        orders.append(min(orders[-1] * 2, _ORDER_CAP))
    return orders


def _subdivided_beta_nodes(a: float, b: float, scale: float, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite rule for the Beta(a, b) weight with segments refined
    geometrically from ``scale`` upward, resolving integrands that fall off
    like exp(-theta/scale) near zero. Endpoint segments keep the singular
    weight factor inside a Jacobi rule; interior segments fold the locally
    smooth weight into the returned node weights. Weights sum to 1."""
    scale = min(max(scale, 1e-12), 0.25)
    edges = [0.0]
    edge = scale
    while edge < 0.25:
        edges.append(edge)
        edge *= 4.0
    edges.extend([0.5, 1.0])

    thetas, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        width = hi - lo
        if lo == 0.0:
            # theta = hi * u keeps the u^(a-1) singularity in the rule
            x, w = _jacobi_rule(order, 0.0, a - 1.0)
            u = 0.5 * (x + 1.0)
            theta = hi * u
            # relative segment mass: u^(a-1) rules are normalized, so scale
            # by the un-normalized segment integral h^a * 2^-a * sum(w) = h^a / a
            wt = hi ** a / a * w * np.exp((b - 1.0) * np.log1p(-theta))
        elif hi == 1.0 and b <= _B_FOLD:
            # theta = 1 - width * v keeps the (1-theta)^(b-1) singularity
            x, w = _jacobi_rule(order, 0.0, b - 1.0)
            v = 0.5 * (x + 1.0)
            theta = 1.0 - width * v
            wt = width ** b / b * w * theta ** (a - 1.0)
        else:
            # interior, or right end with the (1-theta) factor folded in
            # (its mass there is negligible when b is huge)
            x, w = _legendre_rule(order)
            theta = lo + width * 0.5 * (x + 1.0)
            wt = (
                width * 0.5 * w * theta ** (a - 1.0)
                * np.exp((b - 1.0) * np.log1p(-theta))
            )
        thetas.append(theta)
        weights.append(wt)
    theta = np.concatenate(thetas)
    w = np.concatenate(weights)
    return theta, w / w.sum()


def _integrand_factory(phi1: float, e1: int, phi2: float, e2: int):
    def f(theta: np.ndarray) -> np.ndarray:
        out = np.zeros_like(theta)
        if phi1 > 0 and e1 > 0:
            out += e1 * np.log1p(-phi1 * theta)
        if phi2 > 0 and e2 > 0:
            out += e2 * np.log1p(-phi2 * theta)
        return np.exp(out)
    return f


def beta_expectation(a: float, b: float, phi1: float, e1: int, phi2: float, e2: int) -> float:
    """E[(1 - phi1*B)^e1 * (1 - phi2*B)^e2] for B ~ Beta(a, b).

    Evaluated by Gauss-Jacobi quadrature against the beta weight, escalating
    the order until two successive estimates agree to 1e-10 relative. The
    integrand is a polynomial of degree e1+e2, so escalation starts at its
    exactness order; if the cap is insufficient the integral is re-evaluated
    on decay-adapted subdivisions.
    """
    if a <= 0 or b <= 0:
        raise InvalidInputError(f"beta parameters must be positive, got a={a}, b={b}")
    for name, phi in (("phi1", phi1), ("phi2", phi2)):
        if not (0.0 <= phi <= 1.0):
            raise InvalidInputError(f"{name} must lie in [0, 1], got {phi}")
    if e1 < 0 or e2 < 0:
        raise InvalidInputError("exponents must be non-negative")
    if (e1 == 0 or phi1 == 0.0) and (e2 == 0 or phi2 == 0.0):
        return 1.0

    f = _integrand_factory(phi1, e1, phi2, e2)
    prev = None
    for order in _escalation_orders(e1 + e2):
        theta, w = _beta_nodes(a, b, order)
        cur = float(np.sum(w * f(theta)))
        if prev is not None and abs(cur - prev) <= _REL_TOL * max(abs(cur), 1e-300):
            return cur
        prev = cur
    # cap insufficient: composite rule with segments matched to the decay scale
    decay = phi1 * e1 + phi2 * e2 + (b if b > _B_FOLD else 0.0)
    scale = 1.0 / max(decay, 4.0)
    prev = None
    for order in (48, 96, 192, 384):
        theta, w = _subdivided_beta_nodes(a, b, scale, order)
        cur = float(np.sum(w * f(theta)))
        if prev is not None and abs(cur - prev) <= _REL_TOL * max(abs(cur), 1e-300):
            return cur
        prev = cur
    raise QuadratureError("beta expectation did not converge", (prev, cur))


# ---------------------------------------------------------------------------
# Noisy-observation predictive means
# ---------------------------------------------------------------------------

def _noisy_curve_eval(theta: np.ndarray, w: np.ndarray, n: int, ms: np.ndarray,
                      phi_init: float, phi_follow: float, alpha: float) -> np.ndarray:
    """Cumulative noisy rates at follow-up sizes ``ms`` given quadrature nodes.

    Uses the closed geometric sum over follow-up steps:
    phi_f * sum_{k=1}^{m} (1 - phi_f B)^(k-1) = (1 - (1 - phi_f B)^m) / B.
    """
    log_pilot = n * np.log1p(-phi_init * theta) if (n > 0 and phi_init > 0) else np.zeros_like(theta)
    coeff = alpha * w * np.exp(log_pilot) / theta
    log_g = np.log1p(-phi_follow * theta)
    # -expm1(m * log_g) = 1 - (1 - phi_f * theta)^m, stable for tiny phi_f*theta
    powers = -np.expm1(np.outer(ms, log_g))
    return powers @ coeff


def expected_new_variants_noisy_curve(
    n: int,
    m_max: int,
    p: BPHyperParams,
    phi_init: float,
    phi_follow: float,
    ms: np.ndarray | None = None,
) -> np.ndarray:
    """Cumulative expected new *called* variants for each follow-up size in
    ``ms`` (default 1..m_max), when the pilot called variants with probability
    phi_init and the follow-up calls them with probability phi_follow."""
    for name, phi in (("phi_init", phi_init), ("phi_follow", phi_follow)):
        if not (0.0 <= phi <= 1.0):
            raise InvalidInputError(f"{name} must lie in [0, 1], got {phi}")
    if ms is None:
        ms = np.arange(1, m_max + 1)
    ms = np.asarray(ms)
    if phi_follow == 0.0 or m_max == 0 or ms.size == 0:
        return np.zeros(ms.shape, dtype=float)

    a, b = 1.0 - p.sigma, p.c + p.sigma
    degree = n + int(ms.max()) - 1
    if degree <= 2 * _ORDER_CAP - 1 and b <= _B_FOLD:
        # integrand is polynomial in theta: a single rule at the exactness
        # order is exact, no successive comparison needed
        theta, w = _beta_nodes(a, b, _poly_exact_order(degree))
        return _noisy_curve_eval(theta, w, n, ms, phi_init, phi_follow, p.alpha)
    prev = None
    for order in _escalation_orders(degree):
        theta, w = _beta_nodes(a, b, order)
        cur = _noisy_curve_eval(theta, w, n, ms, phi_init, phi_follow, p.alpha)
        if prev is not None:
            err = np.max(np.abs(cur - prev) / np.maximum(np.abs(cur), 1e-300))
            if err <= _REL_TOL:
                return cur
        prev = cur
    # cap insufficient (huge n+m): composite rule matched to the decay scale
    decay = phi_init * n + phi_follow * float(ms.max()) + (b if b > _B_FOLD else 0.0)
    scale = 1.0 / max(decay, 4.0)
    prev = None
    for order in (48, 96, 192, 384):
        theta, w = _subdivided_beta_nodes(a, b, scale, order)
        cur = _noisy_curve_eval(theta, w, n, ms, phi_init, phi_follow, p.alpha)
        if prev is not None:
            err = np.max(np.abs(cur - prev) / np.maximum(np.abs(cur), 1e-300))
            if err <= _REL_TOL:
                return cur
        prev = cur
    raise QuadratureError(
        "noisy prediction quadrature did not converge",
        (float(prev[-1]), float(cur[-1])),
    )


def _noisy_curve_single_pass(
    n: int, m_max: int, p: BPHyperParams, phi_init: float, phi_follow: float
) -> np.ndarray:
    """One-rule variant of the cumulative noisy curve for optimizer inner
    loops: exact (polynomial rule) where possible, otherwise one decay-matched
    composite evaluation (empirically ~1e-9 relative or better) without the
    successive-order comparison."""
    if phi_follow == 0.0 or m_max == 0:
        return np.zeros(m_max, dtype=float)
    ms = np.arange(1, m_max + 1)
    a, b = 1.0 - p.sigma, p.c + p.sigma
    degree = n + m_max - 1
    if degree <= 2 * _ORDER_CAP - 1 and b <= _B_FOLD:
        theta, w = _beta_nodes(a, b, _poly_exact_order(degree))
    else:
        decay = phi_init * n + phi_follow * m_max + (b if b > _B_FOLD else 0.0)
        theta, w = _subdivided_beta_nodes(a, b, 1.0 / max(decay, 4.0), 96)
    return _noisy_curve_eval(theta, w, n, ms, phi_init, phi_follow, p.alpha)


def expected_new_variants_noisy(
    n: int, m: int, p: BPHyperParams, phi_init: float, phi_follow: float
) -> float:
    """Expected number of new variants called in m follow-up samples, given a
    pilot of n samples, under per-study calling probabilities."""
    if m < 0 or n < 0:
        raise InvalidInputError("sample counts must be non-negative")
    if m == 0:
        return 0.0
    return float(
        expected_new_variants_noisy_curve(n, m, p, phi_init, phi_follow, ms=np.array([m]))[0]
    )


def expected_new_rare_noisy(
    n: int, m: int, r: int, p: BPHyperParams, phi_init: float, phi_follow: float
) -> float:
    """Expected number of new variants called exactly r times in m follow-up
    samples under per-study calling probabilities.

    The prefactor carries the rising-factorial ratio (1-sigma)/(1+c); this
    orientation is pinned by the requirement that phi = 1 reduce exactly to
    the perfect-observation rate (see the reduction tests).
    """
    if not (1 <= r <= m):
        raise InvalidInputError(f"occurrence count r={r} outside 1..{m}")
    for name, phi in (("phi_init", phi_init), ("phi_follow", phi_follow)):
        if not (0.0 <= phi <= 1.0):
            raise InvalidInputError(f"{name} must lie in [0, 1], got {phi}")
    if phi_follow == 0.0:
        return 0.0
    log_choose = gammaln(m + 1) - gammaln(r + 1) - gammaln(m - r + 1)
    log_pref = (
        np.log(p.alpha)
        + log_choose
        + r * np.log(phi_follow)
        + log_rising(1.0 - p.sigma, r - 1)
        - log_rising(1.0 + p.c, r - 1)
    )
    expect = beta_expectation(r - p.sigma, p.c + p.sigma, phi_follow, m - r, phi_init, n)
    return float(np.exp(log_pref) * expect)


def expected_new_rare_noisy_cum(
    n: int, m: int, r_cap: int, p: BPHyperParams, phi_init: float, phi_follow: float
) -> float:
    if not (1 <= r_cap <= m):
        raise InvalidInputError(f"cumulative cap R={r_cap} outside 1..{m}")
    return float(
        sum(expected_new_rare_noisy(n, m, r, p, phi_init, phi_follow) for r in range(1, r_cap + 1))
    )
