"""Budget-constrained design of the follow-up study: trade off the number of
samples against per-sample sequencing quality to maximize the predicted
number of new (optionally rare) variants."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bnp import expected_new_rare_noisy_cum, expected_new_variants_noisy
from .core import BPHyperParams, InvalidInputError, SequencingConfig
from .noise import calling_probability

DEFAULT_LAMBDA_GRID = tuple(np.geomspace(2.0, 100.0, 64))


@dataclass(frozen=True)
class CostModel:
    """Total sequencing cost as a function of follow-up size and quality.

    The default charges ``m * log(depth)``: per-sample cost grows
    logarithmically with sequencing depth. A custom model supplies ``fn``;
    it must be strictly increasing in m for fixed depth.
    """

    tag: str = "m_log_lambda"
    fn: Callable[[int, float], float] | None = None

    def cost(self, m: int, depth: float) -> float:
        if self.fn is not None:
            return float(self.fn(m, depth))
        if self.tag != "m_log_lambda":
            raise InvalidInputError(f"unknown cost model {self.tag!r}")
        if depth <= 1.0:
            raise InvalidInputError(
                f"m*log(depth) cost requires depth > 1, got {depth}"
            )
        return float(m * np.log(depth))


def max_m_under_budget(lambda_follow: float, budget: float, cost_model: CostModel) -> int:
    """Largest follow-up size m >= 0 whose cost stays within the budget."""
    if budget <= 0:
        raise InvalidInputError("budget must be positive")
    if cost_model.fn is None:
        if lambda_follow <= 1.0:
            raise InvalidInputError(
                f"m*log(depth) cost requires depth > 1, got {lambda_follow}"
            )
        return int(np.floor(budget / np.log(lambda_follow)))
    if cost_model.cost(1, lambda_follow) > budget:
        return 0
    hi = 1
    while cost_model.cost(hi * 2, lambda_follow) <= budget:
        hi *= 2
    lo = hi
    hi = hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if cost_model.cost(mid, lambda_follow) <= budget:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class DesignProblem:
    fitted: BPHyperParams
    pilot_n: int
    pilot_cfg: SequencingConfig
    budget: float
    cost_model: CostModel = field(default_factory=CostModel)
    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    rare_cap: int | None = None

    def __post_init__(self):
        if self.budget <= 0:
            raise InvalidInputError("budget must be positive")
        grid = np.asarray(self.lambda_grid, dtype=float)
        if grid.size == 0:
            raise InvalidInputError("lambda grid must be nonempty")
        if np.any(np.diff(grid) <= 0):
            raise InvalidInputError("lambda grid must be strictly increasing")
        if grid[0] <= 1.0:
            raise InvalidInputError("lambda grid entries must exceed 1")
        if self.rare_cap is not None and self.rare_cap < 1:
            raise InvalidInputError("rare_cap must be >= 1")


@dataclass(frozen=True)
class DesignPoint:
    lambda_follow: float
    m_max: int
    predicted: float
    cost: float


def sweep_designs(problem: DesignProblem) -> list[DesignPoint]:
    """Evaluate every candidate follow-up quality on the grid: spend the rest
    of the budget on samples, then predict the new (or new rare) variants
    under the implied calling probabilities."""
    phi_init = calling_probability(problem.pilot_cfg)
    points = []
    for lam in problem.lambda_grid:
        m = max_m_under_budget(lam, problem.budget, problem.cost_model)
        follow_cfg = SequencingConfig(lam, problem.pilot_cfg.threshold, problem.pilot_cfg.p_err)
        phi_follow = calling_probability(follow_cfg)
        if m == 0:
            predicted = 0.0
        elif problem.rare_cap is not None:
            predicted = expected_new_rare_noisy_cum(
                problem.pilot_n, m, min(problem.rare_cap, m), problem.fitted, phi_init, phi_follow
            )
        else:
            predicted = expected_new_variants_noisy(
                problem.pilot_n, m, problem.fitted, phi_init, phi_follow
            )
        points.append(
            DesignPoint(
                lambda_follow=float(lam),
                m_max=m,
                predicted=float(predicted),
                cost=problem.cost_model.cost(m, lam) if m > 0 else 0.0,
            )
        )
    return points


def optimize_design(problem: DesignProblem) -> DesignPoint:
    """Grid argmax of the predicted discovery; ties resolve toward the
    cheapest per-sample quality (smallest lambda). Deterministic."""
    points = sweep_designs(problem)
    if not points:
        raise InvalidInputError("design sweep is empty")
    best = points[0]
    for pt in points[1:]:
        if pt.predicted > best.predicted:
            best = pt
    return best
