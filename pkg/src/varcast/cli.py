"""Command-line interface.

Subcommands: simulate, fit, predict, design, evaluate. Exit codes: 0 on
success, 2 on invalid input, 3 on numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bnp import (
    expected_new_rare_noisy_cum,
    expected_new_variants_noisy_curve,
    PoissonPrediction,
)
from .core import (
    InvalidInputError,
    NumericalError,
    SequencingConfig,
    read_matrix,
    validate_hyperparams,
    write_matrix,
)
from .design import CostModel, DesignProblem, optimize_design, sweep_designs
from .fit import DEOptions, fit_hyperparams
from .harness import EvalConfig, UNSEENEST_MESSAGE, emit_curves, run_folds
from .noise import calling_probability
from .simulate import (
    FrequencyVector,
    draw_beta_bernoulli,
    draw_from_frequencies,
    draw_ibp,
    draw_power_law,
)

EXIT_OK = 0
EXIT_INVALID_INPUT = 2
EXIT_NUMERICAL = 3


def _add_seq_flags(p: argparse.ArgumentParser, lambda_init: float = 45.0,
                   lambda_follow: float | None = None) -> None:
    p.add_argument("--lambda-init", type=float, default=lambda_init,
                   help="pilot sequencing quality (mean read depth)")
    if lambda_follow is not None:
        p.add_argument("--lambda-follow", type=float, default=lambda_follow,
                       help="follow-up sequencing quality")
    p.add_argument("--threshold", type=int, default=30,
                   help="variant-calling read threshold")
    p.add_argument("--perr", type=float, default=0.01, help="per-read error rate")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="varcast",
        description="Predict and maximize genetic variant discovery in follow-up studies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a synthetic variant matrix")
    sim.add_argument("kind", choices=["ibp", "beta", "powerlaw", "freqs"])
    sim.add_argument("--n", type=int, required=True, help="number of samples")
    sim.add_argument("--alpha", type=float, help="mass (ibp)")
    sim.add_argument("--sigma", type=float, help="discount (ibp)")
    sim.add_argument("--c", type=float, help="concentration (ibp)")
    sim.add_argument("--bigk", type=int, help="number of latent variants (beta/powerlaw)")
    sim.add_argument("--a", type=float, help="beta shape a")
    sim.add_argument("--b", type=float, help="beta shape b")
    sim.add_argument("--exponent", type=float, help="power-law exponent in [0, 2)")
    sim.add_argument("--freq-file", type=str, help="file of per-variant frequencies")
    sim.add_argument("--phi", type=float, default=1.0, help="thinning probability (freqs)")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", type=str, required=True)

    fit = sub.add_parser("fit", help="fit hyperparameters to a pilot matrix")
    fit.add_argument("--matrix", type=str, required=True)
    _add_seq_flags(fit)
    fit.add_argument("--split-frac", type=float, default=None,
                     help="training fraction of the pilot (default 2/3)")
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--out", type=str, help="write the fit as JSON")

    pred = sub.add_parser("predict", help="predict the total-variant curve")
    pred.add_argument("--matrix", type=str, required=True)
    pred.add_argument("--params", type=str, help="JSON fit file (from `varcast fit`)")
    pred.add_argument("--alpha", type=float)
    pred.add_argument("--sigma", type=float)
    pred.add_argument("--c", type=float)
    pred.add_argument("--m", type=int, required=True, help="follow-up size")
    _add_seq_flags(pred, lambda_follow=32.0)
    pred.add_argument("--rare", type=int, default=None,
                      help="cap: predict new variants seen at most R times")
    pred.add_argument("--out", type=str, help="write the per-m curve as CSV")

    des = sub.add_parser("design", help="optimize follow-up size and quality under a budget")
    des.add_argument("--matrix", type=str, required=True)
    des.add_argument("--budget", type=float, default=3000.0)
    des.add_argument("--cost", type=str, default="mloglambda", choices=["mloglambda"])
    des.add_argument("--lambda-grid", type=str, default="2,100,64",
                     help="lo,hi,n for a log-spaced quality grid")
    des.add_argument("--lambda-init", type=float, default=40.0)
    des.add_argument("--threshold", type=int, default=30)
    des.add_argument("--perr", type=float, default=0.01)
    des.add_argument("--rare", type=int, default=None)
    des.add_argument("--seed", type=int, default=0)
    des.add_argument("--out", type=str, help="write the sweep as CSV")

    ev = sub.add_parser("evaluate", help="fold-based method comparison")
    ev.add_argument("--matrix", type=str, required=True)
    ev.add_argument("--folds", type=int, default=33)
    ev.add_argument("--methods", type=str, default="bnp,bb,jackknife:auto,gt:log2")
    _add_seq_flags(ev, lambda_follow=32.0)
    ev.add_argument("--contiguous", action="store_true",
                    help="contiguous fold assignment instead of seeded random")
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--out", type=str, required=True)

    return parser


def _cmd_simulate(args) -> int:
    if args.kind == "ibp":
        for flag in ("alpha", "sigma", "c"):
            if getattr(args, flag) is None:
                raise InvalidInputError(f"simulate ibp requires --{flag}")
        params = validate_hyperparams(args.alpha, args.sigma, args.c)
        matrix = draw_ibp(args.n, params, args.seed)
    elif args.kind == "beta":
        for flag in ("bigk", "a", "b"):
            if getattr(args, flag) is None:
                raise InvalidInputError(f"simulate beta requires --{flag}")
        matrix = draw_beta_bernoulli(args.n, args.bigk, args.a, args.b, args.seed)
    elif args.kind == "powerlaw":
        for flag in ("bigk", "exponent"):
            if getattr(args, flag) is None:
                raise InvalidInputError(f"simulate powerlaw requires --{flag}")
        matrix = draw_power_law(args.n, args.bigk, args.exponent, args.seed)
    else:
        if args.freq_file is None:
            raise InvalidInputError("simulate freqs requires --freq-file")
        freqs = FrequencyVector.from_file(args.freq_file)
        matrix = draw_from_frequencies(freqs, args.n, args.phi, args.seed)
    write_matrix(matrix, args.out)
    print(f"wrote {matrix.n_samples} samples x {matrix.n_variant_columns} columns "
          f"({matrix.distinct_variants()} observed variants) to {args.out}")
    return EXIT_OK


def _cmd_fit(args) -> int:
    matrix = read_matrix(args.matrix)
    phi = calling_probability(SequencingConfig(args.lambda_init, args.threshold, args.perr))
    n = None
    if args.split_frac is not None:
        if not (0.0 < args.split_frac < 1.0):
            raise InvalidInputError("--split-frac must lie in (0, 1)")
        n = int(args.split_frac * matrix.n_samples)
    result = fit_hyperparams(matrix, phi_init=phi, opts=DEOptions(seed=args.seed), n=n)
    payload = {
        "alpha": result.params.alpha,
        "sigma": result.params.sigma,
        "c": result.params.c,
        "objective": result.objective,
        "evaluations": result.evaluations,
        "split_n": result.split_n,
        "converged": result.converged,
        "phi_init": phi,
        "seed": args.seed,
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def _load_params(args):
    if args.params:
        try:
            blob = json.loads(Path(args.params).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidInputError(f"cannot read params file {args.params}: {exc}") from exc
        return validate_hyperparams(blob["alpha"], blob["sigma"], blob["c"])
    if args.alpha is None or args.sigma is None or args.c is None:
        raise InvalidInputError("provide --params FILE or all of --alpha --sigma --c")
    return validate_hyperparams(args.alpha, args.sigma, args.c)


def _cmd_predict(args) -> int:
    matrix = read_matrix(args.matrix)
    params = _load_params(args)
    phi_i = calling_probability(SequencingConfig(args.lambda_init, args.threshold, args.perr))
    phi_f = calling_probability(SequencingConfig(args.lambda_follow, args.threshold, args.perr))
    n = matrix.n_samples
    j_pilot = matrix.distinct_variants()
    if args.rare is not None:
        value = expected_new_rare_noisy_cum(
            n, args.m, min(args.rare, args.m), params, phi_i, phi_f
        )
        print(f"expected new variants seen at most {args.rare} times in m={args.m}: {value:.4f}")
        if args.out:
            with open(args.out, "w") as fh:
                fh.write("method,m,rare_cap,predicted_new\n")
                fh.write(f"bnp,{args.m},{args.rare},{value!r}\n")
        return EXIT_OK
    new = expected_new_variants_noisy_curve(n, args.m, params, phi_i, phi_f)
    lines = ["method,m,total_mean,total_std,lo,hi,truth"]
    lines.append(f"bnp,0,{float(j_pilot)!r},0.0,{float(j_pilot)!r},{float(j_pilot)!r},")
    for m_idx, rate in enumerate(new, start=1):
        post = PoissonPrediction(float(rate))
        lo, hi = post.interval(0.95)
        lines.append(
            f"bnp,{m_idx},{float(j_pilot + rate)!r},{float(np.sqrt(rate))!r},"
            f"{float(j_pilot + lo)!r},{float(j_pilot + hi)!r},"
        )
    if args.out:
        Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"pilot N={n}, J={j_pilot}; expected total at N+{args.m}: {j_pilot + new[-1]:.4f}")
    return EXIT_OK


def _cmd_design(args) -> int:
    matrix = read_matrix(args.matrix)
    pilot_cfg = SequencingConfig(args.lambda_init, args.threshold, args.perr)
    phi_i = calling_probability(pilot_cfg)
    fit = fit_hyperparams(matrix, phi_init=phi_i, opts=DEOptions(seed=args.seed))
    try:
        lo_s, hi_s, n_s = args.lambda_grid.split(",")
        grid = tuple(np.geomspace(float(lo_s), float(hi_s), int(n_s)))
    except ValueError as exc:
        raise InvalidInputError(f"--lambda-grid must be lo,hi,n: {exc}") from exc
    problem = DesignProblem(
        fitted=fit.params,
        pilot_n=matrix.n_samples,
        pilot_cfg=pilot_cfg,
        budget=args.budget,
        cost_model=CostModel(),
        lambda_grid=grid,
        rare_cap=args.rare,
    )
    points = sweep_designs(problem)
    best = optimize_design(problem)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("lambda_follow,m_max,predicted,cost,is_optimal\n")
            for pt in points:
                fh.write(
                    f"{pt.lambda_follow!r},{pt.m_max},{pt.predicted!r},{pt.cost!r},"
                    f"{int(pt.lambda_follow == best.lambda_follow)}\n"
                )
    print(
        f"fitted (alpha={fit.params.alpha:.4g}, sigma={fit.params.sigma:.4g}, "
        f"c={fit.params.c:.4g}); optimal lambda_follow={best.lambda_follow:.4g}, "
        f"M={best.m_max}, predicted new variants={best.predicted:.2f}"
    )
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    matrix = read_matrix(args.matrix)
    methods = tuple(t.strip() for t in args.methods.split(",") if t.strip())
    cfg = EvalConfig(
        n_folds=args.folds,
        methods=methods,
        seed=args.seed,
        output_path=args.out,
        contiguous=args.contiguous,
    )
    pilot_cfg = SequencingConfig(args.lambda_init, args.threshold, args.perr)
    follow_cfg = SequencingConfig(args.lambda_follow, args.threshold, args.perr)
    curves, details = run_folds(matrix, cfg, pilot_cfg, follow_cfg)
    emit_curves(curves, args.out, config=details)
    print(f"wrote fold curves for {', '.join(methods)} to {args.out}")
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "predict": _cmd_predict,
    "design": _cmd_design,
    "evaluate": _cmd_evaluate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
