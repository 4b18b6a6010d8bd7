"""Synthetic variant-matrix generators.

All generators are deterministic given a seed and portable across platforms:
randomness comes from Philox counter-based bit generators keyed by
``SeedSequence(seed, spawn_key=...)`` substreams. The substream layout is

* sequential buffet-style draws: spawn_key (0,) drives the per-sample
  new-variant counts, spawn_key (1, n) the inclusion draws of sample n;
* i.i.d.-column generators: spawn_key (0,) drives the frequency vector,
  spawn_key (1, j) the presence column of variant j, so columns may be
  generated independently (or in parallel) with identical output.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .core import BPHyperParams, InvalidInputError, VariantMatrix

_POWER_LAW_FLOOR = 1e-8


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=key)))


@dataclass(frozen=True)
class FrequencyVector:
    """Per-variant presence frequencies in (0, 1]."""

    thetas: tuple[float, ...]

    def __post_init__(self):
        arr = np.asarray(self.thetas, dtype=float)
        if arr.size == 0:
            raise InvalidInputError("frequency vector must be nonempty")
        if np.any(arr <= 0.0) or np.any(arr > 1.0):
            raise InvalidInputError("frequencies must lie in (0, 1]")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.thetas, dtype=float)

    @classmethod
    def from_file(cls, path: str | Path) -> "FrequencyVector":
        try:
            vals = [float(line) for line in Path(path).read_text().split()]
        except (OSError, ValueError) as exc:
            raise InvalidInputError(f"cannot parse frequency file {path}: {exc}") from exc
        return cls(tuple(vals))

    def to_file(self, path: str | Path) -> None:
        Path(path).write_text("".join(f"{t!r}\n" for t in self.thetas))


def draw_ibp(n_samples: int, p: BPHyperParams, seed: int) -> VariantMatrix:
    """Sequential predictive draw of a variant matrix under the
    three-parameter beta process.

    Sample n brings Poisson-many never-seen variants, at rate
    alpha * (c+sigma)_{(n-1) rising} / (c+1)_{(n-1) rising}, and re-observes
    each known variant with current count m with probability
    (m - sigma) / (c + n - 1).
    """
    if n_samples < 1:
        raise InvalidInputError("n_samples must be positive")
    n = np.arange(1, n_samples + 1, dtype=float)
    log_rates = (
        np.log(p.alpha)
        + gammaln(p.c + p.sigma + n - 1) - gammaln(p.c + p.sigma)
        - gammaln(p.c + n) + gammaln(p.c + 1)
    )
    births = _stream(seed, 0).poisson(np.exp(log_rates))
    total_cols = int(births.sum())

    counts = np.zeros(total_cols, dtype=np.int64)
    rows: list[np.ndarray] = []
    born = 0
    for i in range(n_samples):
        step = i + 1
        rng = _stream(seed, 1, step)
        if born:
            keep_p = (counts[:born] - p.sigma) / (p.c + step - 1)
            rehits = np.flatnonzero(rng.random(born) < keep_p)
        else:
            rehits = np.zeros(0, dtype=np.int64)
        counts[rehits] += 1
        fresh = int(births[i])
        counts[born:born + fresh] = 1
        row = np.concatenate([rehits, np.arange(born, born + fresh)])
        row.setflags(write=False)
        rows.append(row)
        born += fresh
    return VariantMatrix(n_samples, tuple(rows), total_cols)


def _bernoulli_matrix(thetas: np.ndarray, n_samples: int, seed: int) -> VariantMatrix:
    """Presence matrix with independent Bern(theta_j) entries; column j drawn
    from its own substream."""
    hits_rows: list[np.ndarray] = []
    hits_cols: list[np.ndarray] = []
    for j, theta in enumerate(thetas):
        rng = _stream(seed, 1, j)
        hit = np.flatnonzero(rng.random(n_samples) < theta)
        if hit.size:
            hits_rows.append(hit)
            hits_cols.append(np.full(hit.size, j, dtype=np.int64))
    if hits_rows:
        r = np.concatenate(hits_rows)
        c = np.concatenate(hits_cols)
        order = np.argsort(r, kind="stable")
        r, c = r[order], c[order]
        starts = np.searchsorted(r, np.arange(n_samples + 1))
        rows = []
        for i in range(n_samples):
            row = np.sort(c[starts[i]:starts[i + 1]])
            row.setflags(write=False)
            rows.append(row)
    else:
        empty = np.zeros(0, dtype=np.int64)
        empty.setflags(write=False)
        rows = [empty] * n_samples
    return VariantMatrix(n_samples, tuple(rows), len(thetas))


def draw_beta_bernoulli(n_samples: int, K: int, a: float, b: float, seed: int) -> VariantMatrix:
    """K variant frequencies drawn i.i.d. Beta(a, b), then independent
    Bernoulli presence. Columns that never appear are retained in the column
    count; the SFS transform excludes them."""
    if K <= 0:
        raise InvalidInputError("K must be positive")
    if a <= 0 or b <= 0:
        raise InvalidInputError("beta shape parameters must be positive")
    thetas = _stream(seed, 0).beta(a, b, size=K)
    return _bernoulli_matrix(thetas, n_samples, seed)


def power_law_thetas(K: int, exponent: float, seed: int) -> np.ndarray:
    """Frequencies with density proportional to theta^(-exponent) on the
    truncated support [1e-8, 1], sampled by inverse CDF."""
    if not (0.0 <= exponent < 2.0):
        raise InvalidInputError(
            f"power-law exponent must lie in [0, 2) on the truncated support, got {exponent}"
        )
    u = _stream(seed, 0).random(K)
    eps = _POWER_LAW_FLOOR
    if abs(exponent - 1.0) < 1e-12:
        return np.exp(np.log(eps) * (1.0 - u))
    pw = 1.0 - exponent
    return (eps ** pw + u * (1.0 - eps ** pw)) ** (1.0 / pw)


def draw_power_law(n_samples: int, K: int, exponent: float, seed: int) -> VariantMatrix:
    if K <= 0:
        raise InvalidInputError("K must be positive")
    thetas = power_law_thetas(K, exponent, seed)
    return _bernoulli_matrix(thetas, n_samples, seed)


def draw_from_frequencies(
    freqs: FrequencyVector | Sequence[float],
    n_samples: int,
    phi: float,
    seed: int,
) -> VariantMatrix:
    """Thinned presence draws: entry (n, j) is Bernoulli(theta_j * phi),
    the generation protocol for frequency-file populations under imperfect
    calling. phi = 1 reproduces the unthinned protocol."""
    if not (0.0 <= phi <= 1.0):
        raise InvalidInputError(f"phi must lie in [0, 1], got {phi}")
    thetas = freqs.as_array() if isinstance(freqs, FrequencyVector) else np.asarray(freqs, float)
    return _bernoulli_matrix(thetas * phi, n_samples, seed)
