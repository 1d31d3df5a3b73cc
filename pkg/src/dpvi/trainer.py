"""The DPVI optimization loop and its recorded parameter trace."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from dpvi.accountant import account_privacy, calibrate_noise
from dpvi.gradest import (
    Variant,
    build_per_example_batch,
    check_compatible,
    postprocess_scale,
    row_dim,
)
from dpvi.guide import DiagonalGuide, FullRankGuide
from dpvi.models import DataError, Dataset
from dpvi.privacy import (
    DpSgdConfig,
    PrivacySpend,
    Stream,
    StreamFactory,
    clip_rows,
    gaussian_mechanism,
    poisson_subsample,
)
from dpvi.transforms import Transform

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e8


class DivergenceError(FloatingPointError):
    def __init__(self, iteration: int, message: str = "parameters diverged"):
        super().__init__(f"{message} at iteration {iteration}")
        self.iteration = iteration


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    t: int = 0


def adam_step(state: AdamState, params, grad) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam descent step; returns new params and state."""
    params = np.asarray(params, dtype=float)
    grad = np.asarray(grad, dtype=float)
    m = np.zeros_like(params) if state.m is None else state.m
    v = np.zeros_like(params) if state.v is None else state.v
    if m.shape != params.shape or grad.shape != params.shape:
        raise ValueError("Adam moments, parameters and gradient must share a shape")
    t = state.t + 1
    m = state.beta1 * m + (1 - state.beta1) * grad
    v = state.beta2 * v + (1 - state.beta2) * grad * grad
    mhat = m / (1 - state.beta1**t)
    vhat = v / (1 - state.beta2**t)
    new = params - state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return new, replace(state, m=m, v=v, t=t)


@dataclass
class Trace:
    """Post-update parameter snapshots, one row per iteration."""

    snapshots: np.ndarray
    names: list[str]
    initial: np.ndarray
    config: DpSgdConfig
    spend: PrivacySpend
    dim: int
    full_rank: bool = False
    transform: Transform = Transform.SOFTPLUS
    noise_multiplier: float = 0.0
    batch_sizes: np.ndarray | None = None
    grad_norms: np.ndarray | None = field(default=None, repr=False)

    def __len__(self):
        return self.snapshots.shape[0]

    def guide_from(self, xi) -> DiagonalGuide | FullRankGuide:
        xi = np.asarray(xi, dtype=float)
        cls = FullRankGuide if self.full_rank else DiagonalGuide
        return cls(xi[: self.dim], xi[self.dim :], self.transform)

    def final_guide(self):
        return self.guide_from(self.snapshots[-1])

    def initial_guide(self):
        return self.guide_from(self.initial)

    @property
    def means(self) -> np.ndarray:
        return self.snapshots[:, : self.dim]

    @property
    def scales(self) -> np.ndarray:
        return self.snapshots[:, self.dim :]

    def to_csv(self, path) -> None:
        """Long format ``iteration,parameter,value``; iteration 0 is the initial point."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "parameter", "value"])
            for name, v in zip(self.names, self.initial):
                w.writerow([0, name, repr(float(v))])
            for t, row in enumerate(self.snapshots, start=1):
                for name, v in zip(self.names, row):
                    w.writerow([t, name, repr(float(v))])


def read_trace_csv(path) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Parse a trace CSV into ``(names, initial, snapshots)``."""
    names: list[str] = []
    index: dict[str, int] = {}
    rows: dict[int, dict[str, float]] = {}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            name = rec["parameter"]
            if name not in index:
                index[name] = len(names)
                names.append(name)
            rows.setdefault(int(rec["iteration"]), {})[name] = float(rec["value"])
    iters = sorted(rows)
    table = np.array([[rows[t][n] for n in names] for t in iters])
    if iters and iters[0] == 0:
        return names, table[0], table[1:]
    return names, table[0], table


def run_dpvi(model, guide, dataset: Dataset, config: DpSgdConfig, record_norms: bool = False) -> Trace:
    """Run DP variational inference and return the full parameter trace.

    Each iteration Poisson-subsamples a batch, draws one ``eta`` shared by the
    batch, builds per-example rows for the configured variant, clips, sums,
    adds Gaussian noise, rebuilds aligned scale gradients, divides by ``qN``
    and takes an Adam step on the negative ELBO.
    """
    variant = Variant.parse(config.variant)
    check_compatible(variant, guide)
    if len(dataset) < 1:
        raise DataError("empty dataset")
    if model.dim != guide.dim:
        raise ValueError(f"model has {model.dim} parameters but guide has {guide.dim}")
    model.check_targets(dataset.targets)

    X, y = dataset.features, dataset.targets
    n = len(dataset)
    q = config.subsample_ratio
    T = config.iterations
    C = config.clip_threshold
    delta = config.delta if config.delta is not None else 1.0 / n
    sigma_dp = config.noise_multiplier
    if sigma_dp is None:
        sigma_dp = calibrate_noise(config.target_epsilon, delta, q, T)
        log.info("calibrated noise multiplier %.6g for epsilon %g", sigma_dp, config.target_epsilon)

    d = guide.dim
    rdim = row_dim(variant, d)
    scale = 1.0 / (q * n)
    streams = StreamFactory(config.seed)
    state = AdamState(lr=config.learning_rate)
    xi = guide.params().astype(float)
    initial = xi.copy()
    snapshots = np.empty((T, xi.size))
    batch_sizes = np.empty(T, dtype=np.int64)
    norms = np.full((T, 2), np.nan) if record_norms else None
    cls = type(guide)
    transform = guide.transform

    for t in range(T):
        current = cls(xi[:d], xi[d:], transform)
        idx = poisson_subsample(n, q, streams(t, Stream.SUBSAMPLE))
        eta = streams(t, Stream.ETA).standard_normal(d)
        batch_sizes[t] = idx.size
        if idx.size:
            rows, _ = build_per_example_batch(variant, current, model, X[idx], y[idx], eta, n)
            clipped, row_norms = clip_rows(rows, C)
            total = clipped.sum(axis=0)
            if norms is not None:
                norms[t, 0] = np.linalg.norm(rows[:, :d], axis=1).mean()
                if rows.shape[1] > d:
                    norms[t, 1] = np.linalg.norm(rows[:, d:], axis=1).mean()
        else:
            total = np.zeros(rdim)
        if sigma_dp > 0:
            total = gaussian_mechanism(total, C, sigma_dp, streams(t, Stream.PSI).standard_normal(rdim))
        if variant.aligned:
            g_scale = postprocess_scale(variant, total, eta, current, entropy_weight=q)
            grad = np.concatenate([total, g_scale])
        else:
            grad = total
        xi, state = adam_step(state, xi, -scale * grad)
        if not np.all(np.isfinite(xi)) or np.max(np.abs(xi)) > DIVERGENCE_LIMIT:
            raise DivergenceError(t)
        snapshots[t] = xi

    spend = account_privacy(sigma_dp, q, T, delta) if sigma_dp > 0 else PrivacySpend(math.inf, delta)
    cfg = replace(config, noise_multiplier=sigma_dp, delta=delta)
    return Trace(
        snapshots=snapshots,
        names=guide.param_names(),
        initial=initial,
        config=cfg,
        spend=spend,
        dim=d,
        full_rank=isinstance(guide, FullRankGuide),
        transform=transform,
        noise_multiplier=sigma_dp,
        batch_sizes=batch_sizes,
        grad_norms=norms,
    )
