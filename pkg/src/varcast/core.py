"""Domain types shared by every estimator: sparse variant matrices, the
site-frequency spectrum, and validated model/sequencing parameters.

A variant matrix stores, for each sequenced individual, the set of variant
column indices observed in that individual. Matrices are sparse because real
variant data has a huge number of columns at <1% density. All types here are
immutable after construction and all operations are pure.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


class InvalidInputError(ValueError):
    """Raised when inputs violate a documented precondition or invariant."""


class NumericalError(RuntimeError):
    """Raised when a numerical routine fails to reach its accuracy target."""


def _as_index_array(indices: Iterable[int], n_columns: int, sample: int) -> np.ndarray:
    arr = np.asarray(sorted(set(int(j) for j in indices)), dtype=np.int64)
    if arr.size and (arr[0] < 0 or arr[-1] >= n_columns):
        raise InvalidInputError(
            f"sample {sample}: variant index out of range [0, {n_columns})"
        )
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class VariantMatrix:
    """Binary presence/absence of variants per sampled individual.

    ``variants[n]`` is the sorted, duplicate-free array of 0-based variant
    column indices observed in sample ``n``. Sample order is significant:
    fold splitting and prefix truncation rely on it.
    """

    n_samples: int
    variants: tuple[np.ndarray, ...]
    n_variant_columns: int

    def __post_init__(self):
        if self.n_samples < 1:
            raise InvalidInputError("matrix must contain at least one sample")
        if self.n_variant_columns < 0:
            raise InvalidInputError("n_variant_columns must be non-negative")
        if len(self.variants) != self.n_samples:
            raise InvalidInputError(
                f"expected {self.n_samples} per-sample sets, got {len(self.variants)}"
            )

    @classmethod
    def from_sets(cls, sets: Sequence[Iterable[int]], n_variant_columns: int | None = None) -> "VariantMatrix":
        """Build a matrix from per-sample index collections, validating bounds.

        When ``n_variant_columns`` is omitted, columns are assumed densely
        indexed and the count is inferred as ``max index + 1``.
        """
        raw = [np.asarray(sorted(set(int(j) for j in s)), dtype=np.int64) for s in sets]
        if n_variant_columns is None:
            n_variant_columns = int(max((a[-1] for a in raw if a.size), default=-1)) + 1
        arrays = tuple(
            _as_index_array(a, n_variant_columns, n) for n, a in enumerate(raw)
        )
        return cls(len(arrays), arrays, n_variant_columns)

    def column_totals(self) -> np.ndarray:
        """Occurrence count of every variant column across all samples."""
        if not any(a.size for a in self.variants):
            return np.zeros(self.n_variant_columns, dtype=np.int64)
        flat = np.concatenate([a for a in self.variants if a.size])
        return np.bincount(flat, minlength=self.n_variant_columns)

    def take(self, sample_indices: Sequence[int]) -> "VariantMatrix":
        """Sub-matrix of the given samples, in the given order."""
        idx = list(sample_indices)
        if not idx:
            raise InvalidInputError("cannot take an empty sample subset")
        return VariantMatrix(len(idx), tuple(self.variants[i] for i in idx), self.n_variant_columns)

    def distinct_variants(self) -> int:
        return int(np.count_nonzero(self.column_totals()))


@dataclass(frozen=True)
class SiteFrequencySpectrum:
    """Counts of variants by occurrence: ``counts[r]`` is the number of
    variant columns seen in exactly ``r`` of the ``n`` samples."""

    n: int
    counts: Mapping[int, int]

    def __post_init__(self):
        if self.n < 1:
            raise InvalidInputError("sample size must be positive")
        for r, f in self.counts.items():
            if not (1 <= r <= self.n):
                raise InvalidInputError(f"occupancy {r} outside 1..{self.n}")
            if f < 0:
                raise InvalidInputError(f"count for occupancy {r} is negative")

    @property
    def distinct(self) -> int:
        """Number of distinct observed variants."""
        return int(sum(self.counts.values()))

    def as_array(self, r_max: int | None = None) -> np.ndarray:
        """Dense array ``f`` with ``f[r] = counts.get(r, 0)``; index 0 unused."""
        r_max = self.n if r_max is None else r_max
        f = np.zeros(r_max + 1, dtype=np.int64)
        for r, cnt in self.counts.items():
            if r <= r_max:
                f[r] = cnt
        return f


@dataclass(frozen=True)
class BPHyperParams:
    """Mass, discount and concentration of the three-parameter beta process."""

    alpha: float
    sigma: float
    c: float

    def __post_init__(self):
        if not (self.alpha > 0):
            raise InvalidInputError(f"mass must be positive, got alpha={self.alpha}")
        if not (0.0 <= self.sigma < 1.0):
            raise InvalidInputError(f"discount must lie in [0, 1), got sigma={self.sigma}")
        if not (self.c + self.sigma > 0):
            raise InvalidInputError(
                f"concentration must satisfy c > -sigma, got c={self.c}, sigma={self.sigma}"
            )


def validate_hyperparams(alpha: float, sigma: float, c: float) -> BPHyperParams:
    """Validate ``(alpha, sigma, c)``, raising ``InvalidInputError`` naming the
    violated bound."""
    return BPHyperParams(float(alpha), float(sigma), float(c))


@dataclass(frozen=True)
class SequencingConfig:
    """Sequencing depth, calling threshold and per-read error rate."""

    depth: float
    threshold: int
    p_err: float = 0.0

    def __post_init__(self):
        if not (self.depth > 0):
            raise InvalidInputError(f"depth must be positive, got {self.depth}")
        if self.threshold < 1:
            raise InvalidInputError(f"threshold must be >= 1, got {self.threshold}")
        if not (0.0 <= self.p_err < 1.0):
            raise InvalidInputError(f"p_err must lie in [0, 1), got {self.p_err}")


@dataclass(frozen=True)
class CurvePoint:
    m: int
    mean: float
    std: float
    lo: float
    hi: float


@dataclass(frozen=True)
class PredictionCurve:
    """Per-extrapolation-step expected totals with uncertainty bands."""

    method: str
    pilot_size: int
    points: tuple[CurvePoint, ...] = field(default_factory=tuple)

    def __post_init__(self):
        ms = [p.m for p in self.points]
        if any(b <= a for a, b in zip(ms, ms[1:])):
            raise InvalidInputError("curve points must be sorted by strictly increasing m")
        if any(p.std < 0 for p in self.points):
            raise InvalidInputError("curve stds must be non-negative")

    def means(self) -> np.ndarray:
        return np.array([p.mean for p in self.points])


def build_sfs(matrix: VariantMatrix) -> SiteFrequencySpectrum:
    """Site-frequency spectrum of a matrix: tally, for each r, the variant
    columns whose total occurrence across all samples is exactly r. Columns
    never observed are excluded."""
    totals = matrix.column_totals()
    occupied = totals[totals > 0]
    r_vals, f_vals = np.unique(occupied, return_counts=True)
    return SiteFrequencySpectrum(matrix.n_samples, {int(r): int(f) for r, f in zip(r_vals, f_vals)})


def write_matrix(matrix: VariantMatrix, path: str | Path) -> None:
    """Plain-text matrix format: header ``N K``, then one ``n j`` incidence
    pair per line (0-based)."""
    with open(path, "w") as fh:
        fh.write(f"{matrix.n_samples} {matrix.n_variant_columns}\n")
        for n, arr in enumerate(matrix.variants):
            for j in arr:
                fh.write(f"{n} {j}\n")


def read_matrix(path: str | Path) -> VariantMatrix:
    path = Path(path)
    try:
        with open(path) as fh:
            header = fh.readline().split()
            if len(header) != 2:
                raise InvalidInputError(f"{path}: expected header 'N K'")
            n_samples, n_cols = int(header[0]), int(header[1])
            sets: list[list[int]] = [[] for _ in range(n_samples)]
            for lineno, line in enumerate(fh, start=2):
                parts = line.split()
                if not parts:
                    continue
                if len(parts) != 2:
                    raise InvalidInputError(f"{path}:{lineno}: expected 'n j' pair")
                n, j = int(parts[0]), int(parts[1])
                if not (0 <= n < n_samples):
                    raise InvalidInputError(f"{path}:{lineno}: sample index {n} out of range")
                sets[n].append(j)
    except OSError as exc:
        raise InvalidInputError(f"cannot read matrix file {path}: {exc}") from exc
    arrays = tuple(_as_index_array(s, n_cols, n) for n, s in enumerate(sets))
    return VariantMatrix(n_samples, arrays, n_cols)


def write_sfs(sfs: SiteFrequencySpectrum, path: str | Path) -> None:
    """SFS CSV format: header ``r,count``, one row per nonzero occupancy."""
    with open(path, "w") as fh:
        fh.write("r,count\n")
        for r in sorted(sfs.counts):
            if sfs.counts[r]:
                fh.write(f"{r},{sfs.counts[r]}\n")


def read_sfs(path: str | Path, n: int) -> SiteFrequencySpectrum:
    counts: dict[int, int] = {}
    try:
        with open(path) as fh:
            header = fh.readline().strip()
            if header != "r,count":
                raise InvalidInputError(f"{path}: expected 'r,count' header")
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                r_s, c_s = line.split(",")
                counts[int(r_s)] = int(c_s)
    except OSError as exc:
        raise InvalidInputError(f"cannot read SFS file {path}: {exc}") from exc
    return SiteFrequencySpectrum(n, counts)
