"""Desk-scale experiment sweeps comparing gradient estimators.

Two sweeps are available:

``disparate-noise``
    Mean-field logistic regression; MPAE of means and scales against a long
    non-private reference run, for each variant and seed.
``full-rank``
    Full-rank Bayesian linear regression on correlated synthetic features;
    held-out predictive log-likelihood for full-rank vanilla vs aligned.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from dpvi.accountant import calibrate_noise
from dpvi.gradest import DEFAULT_CLIP, Variant
from dpvi.guide import DiagonalGuide, FullRankGuide
from dpvi.metrics import mpae, predictive_loglik
from dpvi.models import LinearRegression, LogisticRegression
from dpvi.privacy import DpSgdConfig, Stream, StreamFactory
from dpvi.synthetic import SynthRegressionConfig, gen_correlated_regression, gen_logistic
from dpvi.traceanalysis import iterate_average
from dpvi.trainer import run_dpvi

log = logging.getLogger(__name__)


def reference_run(model, guide, dataset, iterations: int, q: float, seed: int = 0, average_fraction: float = 0.25):
    """Non-private VI (no clipping, no noise); returns the trailing-average parameters."""
    cfg = DpSgdConfig(
        variant=Variant.FULL_RANK_VANILLA if isinstance(guide, FullRankGuide) else Variant.VANILLA,
        clip_threshold=math.inf,
        noise_multiplier=0.0,
        subsample_ratio=q,
        iterations=iterations,
        seed=seed,
    )
    trace = run_dpvi(model, guide, dataset, cfg)
    window = max(1, int(average_fraction * iterations))
    return iterate_average(trace.snapshots, window), trace


@dataclass
class DisparateNoiseConfig:
    n: int = 10_000
    p: int = 10
    epochs: float = 500.0
    q: float = 0.01
    epsilon: float = 1.0
    delta: float = 1e-4
    init_sigma: float = 1.0
    init_mean_std: float = 1.0
    seeds: int = 10
    first_seed: int = 0
    data_seed: int = 12345
    reference_factor: float = 4.0
    variants: tuple = ("vanilla", "aligned")
    clip: dict = field(default_factory=dict)
    transform: str = "softplus"

    @property
    def iterations(self) -> int:
        return DpSgdConfig.iterations_for_epochs(self.epochs, self.q)


def run_disparate_noise(cfg: DisparateNoiseConfig, out_dir=None) -> list[dict]:
    data, _ = gen_logistic(cfg.n, cfg.p, seed=cfg.data_seed)
    model = LogisticRegression(cfg.p)
    T = cfg.iterations
    sigma_dp = calibrate_noise(cfg.epsilon, cfg.delta, cfg.q, T)
    log.info("noise multiplier %.4f for epsilon=%g over %d iterations", sigma_dp, cfg.epsilon, T)

    ref_guide = DiagonalGuide.from_sigma(np.zeros(cfg.p), cfg.init_sigma, cfg.transform)
    ref_iters = int(round(cfg.reference_factor * T))
    xi_star, _ = reference_run(model, ref_guide, data, ref_iters, cfg.q, seed=cfg.data_seed)
    d = cfg.p

    rows = []
    for seed in range(cfg.first_seed, cfg.first_seed + cfg.seeds):
        m0 = cfg.init_mean_std * StreamFactory(seed)(0, Stream.INIT).standard_normal(d)
        for v in cfg.variants:
            variant = Variant.parse(v)
            guide = DiagonalGuide.from_sigma(m0, cfg.init_sigma, cfg.transform)
            clip = float(cfg.clip.get(variant.value, DEFAULT_CLIP[variant]))
            dp = DpSgdConfig(variant, clip, sigma_dp, cfg.q, T, cfg.delta, seed)
            trace = run_dpvi(model, guide, data, dp)
            xi0, xi = trace.initial, trace.snapshots[-1]
            row = {
                "seed": seed,
                "variant": variant.value,
                "clip": clip,
                "sigma_dp": sigma_dp,
                "epsilon": trace.spend.epsilon,
                "iterations": T,
                "mpae_m": mpae(xi[:d], xi_star[:d], xi0[:d]),
                "mpae_s": mpae(xi[d:], xi_star[d:], xi0[d:]),
            }
            rows.append(row)
            log.info("%s", row)
            if out_dir is not None:
                trace.to_csv(Path(out_dir) / f"trace_{variant.value}_seed{seed}.csv")
    return rows


@dataclass
class FullRankConfig:
    d: int = 20
    rhos: tuple = (0.2, 0.8)
    n: int = 10_000
    epochs: float = 200.0
    q: float = 0.01
    clip: float = 0.2
    epsilon: float = 1.0
    delta: float | None = None
    init_sigma: float = 1.0
    seeds: int = 10
    first_seed: int = 0
    data_seed: int = 2024
    n_eval_samples: int = 200
    variants: tuple = ("full-rank-vanilla", "full-rank-aligned")
    transform: str = "softplus"

    @property
    def iterations(self) -> int:
        return DpSgdConfig.iterations_for_epochs(self.epochs, self.q)


def run_full_rank(cfg: FullRankConfig, out_dir=None) -> list[dict]:
    T = cfg.iterations
    delta = cfg.delta if cfg.delta is not None else 1.0 / cfg.n
    sigma_dp = calibrate_noise(cfg.epsilon, delta, cfg.q, T)
    model = LinearRegression(cfg.d)
    rows = []
    for k, rho in enumerate(cfg.rhos):
        synth = gen_correlated_regression(SynthRegressionConfig(d=cfg.d, rho=rho, n=cfg.n, seed=cfg.data_seed + k))
        for seed in range(cfg.first_seed, cfg.first_seed + cfg.seeds):
            for v in cfg.variants:
                variant = Variant.parse(v)
                guide = FullRankGuide.from_sigma(np.zeros(model.dim), cfg.init_sigma, cfg.transform)
                dp = DpSgdConfig(variant, cfg.clip, sigma_dp, cfg.q, T, delta, seed)
                trace = run_dpvi(model, guide, synth.train, dp)
                eval_rng = StreamFactory(seed)(0, Stream.EVAL)
                ll = predictive_loglik(trace.final_guide(), model, synth.test, cfg.n_eval_samples, eval_rng)
                row = {
                    "rho": rho,
                    "seed": seed,
                    "variant": variant.value,
                    "clip": cfg.clip,
                    "sigma_dp": sigma_dp,
                    "epsilon": trace.spend.epsilon,
                    "iterations": T,
                    "test_loglik": ll,
                }
                rows.append(row)
                log.info("%s", row)
                if out_dir is not None:
                    trace.to_csv(Path(out_dir) / f"trace_rho{rho}_{variant.value}_seed{seed}.csv")
    return rows


SWEEPS = {
    "disparate-noise": (DisparateNoiseConfig, run_disparate_noise),
    "full-rank": (FullRankConfig, run_full_rank),
}


def _coerce(default, text: str):
    text = text.strip()
    if isinstance(default, bool):
        return text.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float) or default is None:
        return float(text)
    if isinstance(default, tuple):
        items = [t.strip() for t in text.split(",") if t.strip()]
        if default and isinstance(default[0], float):
            return tuple(float(t) for t in items)
        return tuple(items)
    if isinstance(default, dict):
        out = {}
        for item in text.split(","):
            if item.strip():
                k, _, v = item.partition(":")
                out[k.strip()] = float(v)
        return out
    return text


def parse_config(text: str) -> tuple[str, dict]:
    """Parse ``key = value`` lines; ``sweep`` names the experiment, ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        k, _, v = line.partition("=")
        values[k.strip()] = v.strip()
    sweep = values.pop("sweep", None)
    if sweep not in SWEEPS:
        raise ValueError(f"config must set sweep to one of {sorted(SWEEPS)}")
    return sweep, values


def build_config(sweep: str, values: dict):
    cls, _ = SWEEPS[sweep]
    defaults = cls()
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for k, v in values.items():
        if k not in known:
            raise ValueError(f"unknown key {k!r} for sweep {sweep}")
        kwargs[k] = _coerce(getattr(defaults, k), v)
    return cls(**kwargs)


def write_rows(rows: list[dict], path) -> None:
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def summarize(rows: list[dict], group_keys=("variant",)) -> list[dict]:
    """Mean and standard error of every numeric metric per group."""
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in group_keys), []).append(r)
    metrics = [k for k in rows[0] if k.startswith(("mpae", "test_"))] if rows else []
    out = []
    for key, rs in groups.items():
        rec = dict(zip(group_keys, key))
        rec["runs"] = len(rs)
        for mkey in metrics:
            vals = np.array([r[mkey] for r in rs], dtype=float)
            rec[f"{mkey}_mean"] = float(vals.mean())
            rec[f"{mkey}_se"] = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else float("nan")
        out.append(rec)
    return out


def run_sweep(config_text: str, out_dir) -> tuple[list[dict], list[dict]]:
    sweep, values = parse_config(config_text)
    cfg = build_config(sweep, values)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = SWEEPS[sweep][1](cfg, out_dir)
    write_rows(rows, out_dir / "runs.csv")
    summary = summarize(rows, ("rho", "variant") if sweep == "full-rank" else ("variant",))
    write_rows(summary, out_dir / "summary.csv")
    with open(out_dir / "config.txt", "w") as fh:
        fh.write(f"sweep = {sweep}\n")
        for k, v in asdict(cfg).items():
            fh.write(f"{k} = {v}\n")
    return rows, summary
