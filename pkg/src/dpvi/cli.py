"""Command-line entry point: ``dpvi <command> ...`` or ``python -m dpvi``."""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from dpvi.accountant import account_privacy, calibrate_noise
from dpvi.experiments import run_sweep
from dpvi.gradest import DEFAULT_CLIP, Variant
from dpvi.guide import DiagonalGuide, FullRankGuide, write_guide_csv
from dpvi.metrics import grad_check
from dpvi.models import MODELS, Dataset, make_model
from dpvi.privacy import DpSgdConfig
from dpvi.synthetic import SynthRegressionConfig, gen_correlated_regression, gen_logistic
from dpvi.traceanalysis import build_noise_aware_posterior, detect_burn_out, iterate_average
from dpvi.trainer import read_trace_csv, run_dpvi
from dpvi.transforms import Transform

ACCOUNTANT_NOTE = "epsilon from a Renyi-DP accountant (conservative relative to Fourier/PLD accounting)"


def _cmd_train(args) -> int:
    data = Dataset.from_csv(args.data, target=args.target, standardize=args.standardize)
    model = make_model(args.model, data.n_features)
    variant = Variant.parse(args.variant)
    cls = FullRankGuide if variant.full_rank else DiagonalGuide
    guide = cls.from_sigma(np.zeros(model.dim), args.init_sigma, args.transform)
    iterations = args.iterations or DpSgdConfig.iterations_for_epochs(args.epochs, args.q)
    clip = args.clip if args.clip is not None else DEFAULT_CLIP[variant]
    cfg = DpSgdConfig(
        variant=variant,
        clip_threshold=clip,
        noise_multiplier=args.sigma,
        subsample_ratio=args.q,
        iterations=iterations,
        delta=args.delta,
        seed=args.seed,
        target_epsilon=args.epsilon,
        learning_rate=args.lr,
    )
    trace = run_dpvi(model, guide, data, cfg)
    if args.trace_out:
        trace.to_csv(args.trace_out)
    if args.guide_out:
        write_guide_csv(trace.final_guide(), args.guide_out)
    print(f"variant={variant.value} iterations={iterations} clip={clip:g} noise_multiplier={trace.noise_multiplier:.6g}")
    print(f"epsilon={trace.spend.epsilon:.6g} delta={trace.spend.delta:.6g} ({ACCOUNTANT_NOTE})")
    return 0


def _infer_layout(names: list[str]) -> tuple[int, bool]:
    d = sum(1 for n in names if n.startswith("m["))
    return d, any(n.startswith("a[") for n in names)


def _cmd_analyze(args) -> int:
    names, _, snapshots = read_trace_csv(args.trace)
    d, full_rank = _infer_layout(names)
    windows = [int(w) for w in args.windows.split(",")] if args.windows else None
    report = detect_burn_out(snapshots, windows, args.threshold, args.mode)
    lengths = np.where(report.converged, report.t_burn_out, 1)
    means = iterate_average(snapshots, lengths)
    post = None
    if np.any(report.converged[:d]):
        post = build_noise_aware_posterior(snapshots, report, d, args.transform, full_rank)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["parameter", "T_burn_out", "slope", "mean", "trace_var", "inflated_var"])
        for j, name in enumerate(names):
            if post is None:
                tvar, infl = math.nan, math.nan
            elif j < d:
                tvar, infl = post.trace_var_m[j], post.inflated_marginal_var[j]
            else:
                tvar, infl = post.trace_var_scale[j - d], math.nan
            w.writerow([name, int(report.t_burn_out[j]), repr(float(report.slope[j])), repr(float(means[j])),
                        repr(float(tvar)), repr(float(infl))])
    finally:
        if args.out:
            out.close()
    if post is None:
        print("warning: no mean parameter converged", file=sys.stderr)
    return 0


def _cmd_gen_data(args) -> int:
    if args.kind == "correlated-regression":
        synth = gen_correlated_regression(
            SynthRegressionConfig(d=args.d, rho=args.rho, n=args.n, noise_std=args.noise_std, seed=args.seed)
        )
        synth.train.to_csv(args.out)
        if args.test_out:
            synth.test.to_csv(args.test_out)
    else:
        data, _ = gen_logistic(args.n, args.d, seed=args.seed)
        data.to_csv(args.out)
    return 0


def _cmd_grad_check(args) -> int:
    report = grad_check(make_model(args.model, args.features), args.points, args.tolerance, args.seed)
    print(report)
    return 0 if report.passed else 1


def _cmd_accountant(args) -> int:
    spend = account_privacy(args.sigma, args.q, args.iterations, args.delta)
    print(f"epsilon={spend.epsilon:.6g} delta={args.delta:g} order={spend.order:g}")
    print(ACCOUNTANT_NOTE)
    return 0


def _cmd_calibrate(args) -> int:
    sigma = calibrate_noise(args.epsilon, args.delta, args.q, args.iterations)
    eps = account_privacy(sigma, args.q, args.iterations, args.delta).epsilon
    print(f"noise_multiplier={sigma:.6g} epsilon={eps:.6g}")
    return 0


def _cmd_experiment(args) -> int:
    text = Path(args.config).read_text()
    for item in args.set or []:
        text += "\n" + item
    rows, summary = run_sweep(text, args.out)
    for rec in summary:
        print(", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in rec.items()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dpvi", description="Differentially private variational inference")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run DPVI on a CSV data set")
    t.add_argument("--model", choices=sorted(MODELS), required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--target", default="y")
    t.add_argument("--standardize", action="store_true")
    t.add_argument("--variant", default="aligned", choices=[v.value for v in Variant])
    t.add_argument("--epochs", type=float, default=100.0)
    t.add_argument("--iterations", type=int, default=None, help="overrides --epochs")
    t.add_argument("--q", type=float, default=0.01)
    t.add_argument("--clip", type=float, default=None)
    noise = t.add_mutually_exclusive_group(required=True)
    noise.add_argument("--sigma", type=float, default=None)
    noise.add_argument("--epsilon", type=float, default=None)
    t.add_argument("--delta", type=float, default=None, help="defaults to 1/N")
    t.add_argument("--init-sigma", type=float, default=1.0)
    t.add_argument("--transform", default="softplus", choices=[k.value for k in Transform])
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--trace-out")
    t.add_argument("--guide-out")
    t.set_defaults(func=_cmd_train)

    a = sub.add_parser("analyze-trace", help="burn-out detection, averaging, noise-aware variances")
    a.add_argument("--trace", required=True)
    a.add_argument("--threshold", type=float, default=0.05)
    a.add_argument("--windows", default=None, help="comma-separated trailing window lengths")
    a.add_argument("--mode", choices=["normalized", "raw"], default="normalized")
    a.add_argument("--transform", default="softplus", choices=[k.value for k in Transform])
    a.add_argument("--out")
    a.set_defaults(func=_cmd_analyze)

    g = sub.add_parser("gen-data", help="write a synthetic data set")
    g.add_argument("--kind", choices=["correlated-regression", "logistic"], default="correlated-regression")
    g.add_argument("--d", type=int, default=20)
    g.add_argument("--rho", type=float, default=0.2)
    g.add_argument("--n", type=int, default=10_000)
    g.add_argument("--noise-std", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--test-out")
    g.set_defaults(func=_cmd_gen_data)

    c = sub.add_parser("grad-check", help="finite-difference check of model gradients")
    c.add_argument("--model", choices=sorted(MODELS), required=True)
    c.add_argument("--features", type=int, default=5)
    c.add_argument("--points", type=int, default=100)
    c.add_argument("--tolerance", type=float, default=1e-5)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=_cmd_grad_check)

    acc = sub.add_parser("accountant", help="epsilon for a noise multiplier")
    acc.add_argument("--sigma", type=float, required=True)
    acc.add_argument("--q", type=float, required=True)
    acc.add_argument("--iterations", type=int, required=True)
    acc.add_argument("--delta", type=float, required=True)
    acc.set_defaults(func=_cmd_accountant)

    cal = sub.add_parser("calibrate", help="noise multiplier for a target epsilon")
    cal.add_argument("--epsilon", type=float, required=True)
    cal.add_argument("--q", type=float, required=True)
    cal.add_argument("--iterations", type=int, required=True)
    cal.add_argument("--delta", type=float, required=True)
    cal.set_defaults(func=_cmd_calibrate)

    e = sub.add_parser("experiment", help="run a named sweep from a key = value config")
    e.add_argument("--config", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--set", action="append", help="extra key=value line, may repeat")
    e.set_defaults(func=_cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
