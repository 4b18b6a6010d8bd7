"""Fold-based evaluation: treat each fold as a pilot, the remaining samples
as the follow-up, run every requested method, and aggregate total-variant
curves (pilot + new) across folds together with the realized truth."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from . import baselines
from .bnp import expected_new_variants_noisy_curve
from .core import (
    CurvePoint,
    InvalidInputError,
    PredictionCurve,
    SequencingConfig,
    VariantMatrix,
    build_sfs,
)
from .fit import DEOptions, fit_hyperparams, heldout_new_counts
from .noise import calling_probability

logger = logging.getLogger(__name__)

UNSEENEST_MESSAGE = (
    "method 'unseenest' (linear-program frequency recovery) is not provided: "
    "it needs a general LP solver and is reported to be numerically unstable "
    "at small pilot sizes; choose among bnp, bb, jackknife:<p|auto>, "
    "good_toulmin:<log2|log3>"
)

DEFAULT_METHODS = ("bnp", "bb", "jackknife:auto", "good_toulmin:log2")


@dataclass(frozen=True)
class EvalConfig:
    n_folds: int = 33
    methods: tuple[str, ...] = DEFAULT_METHODS
    seed: int = 0
    output_path: str | None = None
    contiguous: bool = False
    de_options: DEOptions | None = None

    def __post_init__(self):
        if self.n_folds < 2:
            raise InvalidInputError("need at least 2 folds")
        for tag in self.methods:
            parse_method(tag)


def parse_method(tag: str) -> tuple[str, object]:
    """Normalize a method tag to (kind, parameter)."""
    name, _, arg = tag.partition(":")
    name = name.strip().lower()
    if name == "unseenest":
        raise InvalidInputError(UNSEENEST_MESSAGE)
    if name == "bnp":
        return "bnp", None
    if name == "bb":
        return "bb", None
    if name == "jackknife":
        arg = arg or "auto"
        if arg == "auto":
            return "jackknife", "auto"
        try:
            order = int(arg)
        except ValueError:
            raise InvalidInputError(f"bad jackknife order {arg!r}") from None
        if order < 1:
            raise InvalidInputError(f"jackknife order must be >= 1, got {order}")
        return "jackknife", order
    if name in ("good_toulmin", "gt"):
        arg = arg or "log2"
        if arg not in ("log2", "log3"):
            raise InvalidInputError(f"good_toulmin base must be log2 or log3, got {arg!r}")
        return "good_toulmin", arg
    raise InvalidInputError(f"unknown method tag {tag!r}")


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=key)))


def _thin_matrix(matrix: VariantMatrix, phi: float, rng: np.random.Generator) -> VariantMatrix:
    """Observation thinning: each incidence is kept with probability phi."""
    if phi >= 1.0:
        return matrix
    rows = []
    for arr in matrix.variants:
        keep = arr[rng.random(arr.size) < phi]
        keep.setflags(write=False)
        rows.append(keep)
    return VariantMatrix(matrix.n_samples, tuple(rows), matrix.n_variant_columns)


def _fold_assignment(
    n_samples: int, n_folds: int, seed: int, contiguous: bool
) -> list[np.ndarray]:
    fold_size = n_samples // n_folds
    if fold_size < 3:
        raise InvalidInputError(
            f"fold size {fold_size} < 3 (N={n_samples}, folds={n_folds})"
        )
    usable = fold_size * n_folds
    if usable < n_samples:
        logger.info("dropping %d remainder samples for equal-size folds", n_samples - usable)
    if contiguous:
        order = np.arange(usable)
    else:
        order = _stream(seed, 0).permutation(n_samples)[:usable]
    return [order[k * fold_size:(k + 1) * fold_size] for k in range(n_folds)]


def _curve_from_stack(method: str, pilot_size: int, stack: np.ndarray) -> PredictionCurve:
    mean = stack.mean(axis=0)
    std = stack.std(axis=0, ddof=1) if stack.shape[0] > 1 else np.zeros(stack.shape[1])
    points = tuple(
        CurvePoint(m=int(m), mean=float(mu), std=float(sd), lo=float(mu - sd), hi=float(mu + sd))
        for m, (mu, sd) in enumerate(zip(mean, std))
    )
    return PredictionCurve(method=method, pilot_size=pilot_size, points=points)


def run_folds(
    matrix: VariantMatrix,
    cfg: EvalConfig,
    pilot_cfg: SequencingConfig,
    follow_cfg: SequencingConfig,
) -> tuple[dict[str, PredictionCurve], dict]:
    """Evaluate every method across folds.

    Each fold in turn serves as the pilot, observed under the pilot
    sequencing conditions; all other retained samples form the follow-up,
    observed under the follow-up conditions. Methods fit on the observed
    pilot only. The model-based method additionally receives the two calling
    probabilities; baselines model the observed data as-is. Returns
    per-method total-variant curves (m = 0 is the pilot itself), a "truth"
    curve, and a details record for reproducibility sidecars.
    """
    folds = _fold_assignment(matrix.n_samples, cfg.n_folds, cfg.seed, cfg.contiguous)
    phi_i = calling_probability(pilot_cfg)
    phi_f = calling_probability(follow_cfg)
    n_pilot = folds[0].size
    m_total = n_pilot * (cfg.n_folds - 1)
    ms = np.arange(0, m_total + 1)

    stacks: dict[str, list[np.ndarray]] = {tag: [] for tag in cfg.methods}
    truth_stack: list[np.ndarray] = []
    fold_details: list[dict] = []

    for k, fold in enumerate(folds):
        rest = np.concatenate([f for i, f in enumerate(folds) if i != k])
        pilot = _thin_matrix(matrix.take(fold), phi_i, _stream(cfg.seed, 1, k, 0))
        follow = _thin_matrix(matrix.take(rest), phi_f, _stream(cfg.seed, 1, k, 1))
        combined = VariantMatrix(
            pilot.n_samples + follow.n_samples,
            pilot.variants + follow.variants,
            matrix.n_variant_columns,
        )
        pilot_distinct = pilot.distinct_variants()
        truths = heldout_new_counts(combined, n_pilot)
        truth_stack.append(np.concatenate([[pilot_distinct], pilot_distinct + truths]))

        sfs = build_sfs(pilot)
        detail: dict = {"fold": k, "pilot_distinct": pilot_distinct}

        for tag in cfg.methods:
            kind, arg = parse_method(tag)
            if kind == "bnp":
                opts = cfg.de_options or DEOptions()
                fold_seed = int(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(2, k)).generate_state(1)[0])
                opts = replace(opts, seed=fold_seed)
                fit = fit_hyperparams(pilot, phi_init=phi_i, opts=opts)
                new = expected_new_variants_noisy_curve(
                    n_pilot, m_total, fit.params, phi_i, phi_f
                )
                curve = pilot_distinct + np.concatenate([[0.0], new])
                detail["bnp_fit"] = {
                    "alpha": fit.params.alpha,
                    "sigma": fit.params.sigma,
                    "c": fit.params.c,
                    "objective": fit.objective,
                    "converged": fit.converged,
                    "seed": fold_seed,
                }
            elif kind == "bb":
                if sfs.counts:
                    bfit = baselines.bb_fit(sfs)
                    new = np.array([baselines.bb_predict(sfs, int(m), bfit) for m in ms])
                    detail["bb_fit"] = {"a": bfit.a, "b": bfit.b, "loglik": bfit.loglik}
                else:
                    new = np.zeros(ms.size)
                curve = pilot_distinct + new
            elif kind == "jackknife":
                order = arg
                if order == "auto":
                    order = baselines.jackknife_order_select(sfs, m_total)
                    detail["jackknife_order"] = order
                curve = baselines.jackknife_predict_curve(sfs, ms, int(order))
            else:  # good_toulmin
                new = np.array([baselines.good_toulmin(sfs, int(m), base=str(arg)) for m in ms])
                curve = pilot_distinct + new
            stacks[tag].append(curve)
        fold_details.append(detail)

    curves = {
        tag: _curve_from_stack(tag, n_pilot, np.vstack(stacks[tag])) for tag in cfg.methods
    }
    curves["truth"] = _curve_from_stack("truth", n_pilot, np.vstack(truth_stack))
    details = {
        "seed": cfg.seed,
        "n_folds": cfg.n_folds,
        "fold_size": n_pilot,
        "contiguous": cfg.contiguous,
        "methods": list(cfg.methods),
        "pilot_cfg": pilot_cfg.__dict__,
        "follow_cfg": follow_cfg.__dict__,
        "phi_init": phi_i,
        "phi_follow": phi_f,
        "folds": fold_details,
    }
    return curves, details


def emit_curves(
    curves: Mapping[str, PredictionCurve],
    path: str | Path,
    config: Mapping | None = None,
) -> None:
    """Write curves as CSV (method,m,total_mean,total_std,lo,hi,truth) plus a
    JSON sidecar (<path>.json) holding the full configuration."""
    path = Path(path)
    truth = curves.get("truth")
    truth_by_m = {pt.m: pt.mean for pt in truth.points} if truth else {}
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["method", "m", "total_mean", "total_std", "lo", "hi", "truth"])
            for tag, curve in curves.items():
                if tag == "truth":
                    continue
                for pt in curve.points:
                    t = truth_by_m.get(pt.m, "")
                    writer.writerow(
                        [tag, pt.m, repr(pt.mean), repr(pt.std), repr(pt.lo), repr(pt.hi),
                         repr(t) if t != "" else ""]
                    )
        sidecar = path.with_name(path.name + ".json")
        with open(sidecar, "w") as fh:
            json.dump(_jsonable(config or {}), fh, indent=2)
    except OSError as exc:
        raise InvalidInputError(f"cannot write curves to {path}: {exc}") from exc


def read_curves(path: str | Path) -> dict[str, list[tuple[int, float, float, float, float]]]:
    """Parse an emitted CSV back into per-method point tuples (for round-trip
    checks and downstream plotting)."""
    out: dict[str, list[tuple[int, float, float, float, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out.setdefault(row["method"], []).append(
                (
                    int(row["m"]),
                    float(row["total_mean"]),
                    float(row["total_std"]),
                    float(row["lo"]),
                    float(row["hi"]),
                )
            )
    return out


def _jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj
