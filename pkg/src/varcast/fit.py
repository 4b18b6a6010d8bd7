"""Empirical-Bayes hyperparameter estimation.

The three hyperparameters are fit by treating the predictive mean as a
regression function: split the pilot into a training prefix of size n and a
test suffix, and minimize the squared error between predicted and realized
cumulative new-variant counts over the suffix. Minimization uses an in-house
differential evolution (rand/1/bin) over a reparameterized box: optimize
(u, sigma, v) with alpha = e^u and c = e^v - sigma, which turns the coupled
constraint c > -sigma into plain box bounds.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .bnp import _noisy_curve_single_pass, expected_new_variants_curve
from .core import BPHyperParams, InvalidInputError, NumericalError, VariantMatrix

_LOG_ALPHA_BOUNDS = (np.log(1e-3), np.log(1e7))
_SIGMA_BOUNDS = (0.0, 0.999)
_LOG_CSIGMA_BOUNDS = (np.log(1e-6), np.log(1e4))


@dataclass(frozen=True)
class DEOptions:
    """Differential evolution settings (rand/1/bin, box-constrained)."""

    population_size: int = 40
    max_generations: int = 300
    crossover_rate: float = 0.9
    differential_weight: float = 0.8
    weight_jitter: tuple[float, float] | None = (0.5, 1.0)
    tolerance: float = 1e-8
    stagnation_window: int = 30
    seed: int = 0
    bounds: tuple[tuple[float, float], tuple[float, float], tuple[float, float]] = (
        _LOG_ALPHA_BOUNDS,
        _SIGMA_BOUNDS,
        _LOG_CSIGMA_BOUNDS,
    )

    def __post_init__(self):
        if self.population_size < 8:
            raise InvalidInputError("population_size must be at least 8")
        if not (0.0 <= self.crossover_rate <= 1.0):
            raise InvalidInputError("crossover_rate must lie in [0, 1]")
        for lo, hi in self.bounds:
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise InvalidInputError("bounds must be finite non-empty intervals")


@dataclass(frozen=True)
class FitResult:
    params: BPHyperParams
    objective: float
    evaluations: int
    split_n: int
    converged: bool
    degenerate: bool = False


def params_from_vector(z: np.ndarray) -> BPHyperParams:
    """Map an optimizer vector (u, sigma, v) to model parameters."""
    return BPHyperParams(float(np.exp(z[0])), float(z[1]), float(np.exp(z[2]) - z[1]))


def heldout_new_counts(matrix: VariantMatrix, n: int) -> np.ndarray:
    """Realized cumulative new-variant counts: entry m-1 is the number of
    variant columns absent from samples 1..n and present among samples
    n+1..n+m. Non-decreasing by construction."""
    if not (1 <= n < matrix.n_samples):
        raise InvalidInputError(f"split size n={n} outside 1..{matrix.n_samples - 1}")
    seen = np.zeros(matrix.n_variant_columns, dtype=bool)
    for arr in matrix.variants[:n]:
        seen[arr] = True
    out = np.empty(matrix.n_samples - n, dtype=np.int64)
    count = 0
    for i, arr in enumerate(matrix.variants[n:]):
        fresh = arr[~seen[arr]]
        count += fresh.size
        seen[fresh] = True
        out[i] = count
    return out


def _prediction_curve(n: int, m_max: int, p: BPHyperParams, phi: float) -> np.ndarray:
    if phi == 1.0:
        return expected_new_variants_curve(n, m_max, p)
    return _noisy_curve_single_pass(n, m_max, p, phi, phi)


def fit_objective(
    p: BPHyperParams,
    truths: np.ndarray,
    n: int,
    phi_init: float,
    loss: str = "l2",
) -> float:
    """Prediction error of the parameter triple on a held-out suffix.

    The pilot's own calling probability applies to both the training prefix
    and the pseudo-follow-up, so the predictor is evaluated at
    (phi_init, phi_init). The cumulative curve is produced in one pass, so
    the cost is O(len(truths)) term evaluations.
    """
    truths = np.asarray(truths, dtype=float)
    if truths.size == 0:
        raise InvalidInputError("truths must be nonempty")
    pred = _prediction_curve(n, truths.size, p, phi_init)
    resid = pred - truths
    if loss == "l2":
        return float(np.sum(resid * resid))
    if loss == "l1":
        return float(np.sum(np.abs(resid)))
    raise InvalidInputError(f"unknown loss {loss!r}")


def _default_split(n_samples: int) -> int:
    return (2 * n_samples) // 3


def _split_truths(
    matrix: VariantMatrix, n: int, n_splits: int, rng: np.random.Generator
) -> list[np.ndarray]:
    """Training targets for each split. The first split keeps the sample
    order; extra splits (cross-validation style) use seeded permutations."""
    truths = [heldout_new_counts(matrix, n)]
    for _ in range(n_splits - 1):
        perm = rng.permutation(matrix.n_samples)
        truths.append(heldout_new_counts(matrix.take(perm), n))
    return truths


def fit_hyperparams(
    matrix: VariantMatrix,
    phi_init: float = 1.0,
    opts: DEOptions | None = None,
    n: int | None = None,
    n_splits: int = 1,
    loss: str = "l2",
) -> FitResult:
    """Fit (alpha, sigma, c) to a pilot by differential evolution.

    Deterministic given ``opts.seed``. Candidate evaluations within a
    generation are independent and may run concurrently; the random draws
    for a generation happen up front, at the generation barrier, so results
    do not depend on evaluation order.
    """
    opts = opts or DEOptions()
    if matrix.n_samples < 3:
        raise InvalidInputError("pilot must contain at least 3 samples")
    n = _default_split(matrix.n_samples) if n is None else n
    if not (1 <= n < matrix.n_samples):
        raise InvalidInputError(f"split size n={n} outside 1..{matrix.n_samples - 1}")

    rng = np.random.Generator(np.random.PCG64(opts.seed))

    if matrix.distinct_variants() == 0:
        warnings.warn("pilot contains no variants; returning boundary fit", RuntimeWarning)
        z = np.array([opts.bounds[0][0], 0.0, 0.0])
        params = params_from_vector(z)
        truths = heldout_new_counts(matrix, n).astype(float)
        return FitResult(
            params=params,
            objective=fit_objective(params, truths, n, phi_init, loss),
            evaluations=0,
            split_n=n,
            converged=True,
            degenerate=True,
        )

    truth_list = [t.astype(float) for t in _split_truths(matrix, n, n_splits, rng)]

    def objective(z: np.ndarray) -> float:
        p = params_from_vector(z)
        try:
            return sum(fit_objective(p, t, n, phi_init, loss) for t in truth_list)
        except NumericalError:
            # a candidate whose prediction cannot be evaluated loses outright
            return float("inf")

    lo = np.array([b[0] for b in opts.bounds])
    hi = np.array([b[1] for b in opts.bounds])
    pop_n = opts.population_size

    population = lo + rng.random((pop_n, 3)) * (hi - lo)
    scores = np.array([objective(z) for z in population])
    evaluations = pop_n
    best_history = [float(scores.min())]

    converged = False
    for _ in range(opts.max_generations):
        # all randomness for the generation is drawn here, at the barrier
        weight = (
            rng.uniform(*opts.weight_jitter)
            if opts.weight_jitter is not None
            else opts.differential_weight
        )
        partners = np.empty((pop_n, 3), dtype=np.int64)
        for i in range(pop_n):
            pool = np.delete(np.arange(pop_n), i)
            partners[i] = rng.choice(pool, size=3, replace=False)
        cross = rng.random((pop_n, 3)) < opts.crossover_rate
        cross[np.arange(pop_n), rng.integers(0, 3, pop_n)] = True

        mutants = population[partners[:, 0]] + weight * (
            population[partners[:, 1]] - population[partners[:, 2]]
        )
        trials = np.clip(np.where(cross, mutants, population), lo, hi)

        trial_scores = np.array([objective(z) for z in trials])
        evaluations += pop_n
        improved = trial_scores <= scores
        population[improved] = trials[improved]
        scores[improved] = trial_scores[improved]

        best_history.append(float(scores.min()))
        if len(best_history) > opts.stagnation_window:
            then = best_history[-1 - opts.stagnation_window]
            if then - best_history[-1] <= opts.tolerance * max(then, 1e-300):
                converged = True
                break

    best = int(scores.argmin())
    params = params_from_vector(population[best])
    return FitResult(
        params=params,
        objective=float(scores[best]),
        evaluations=evaluations,
        split_n=n,
        converged=converged,
    )
