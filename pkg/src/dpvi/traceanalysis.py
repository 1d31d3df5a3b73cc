"""Post-hoc analysis of DP-SGD parameter traces.

Near an optimum the iterates behave like an Ornstein-Uhlenbeck process, so the
trailing, converged part of a trace can be averaged (Polyak-Ruppert) and its
spread used as an estimate of the extra variance injected by DP noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from dpvi.guide import cholesky_factor
from dpvi.transforms import Transform, transform_value


class AnalysisError(RuntimeError):
    pass


def _as_2d(trace) -> tuple[np.ndarray, bool]:
    trace = np.asarray(trace, dtype=float)
    if trace.ndim == 1:
        return trace[:, None], True
    if trace.ndim != 2:
        raise ValueError("trace must be (iterations,) or (iterations, parameters)")
    return trace, False


def default_windows(length: int) -> list[int]:
    """Trailing candidate lengths ``T/8, T/4, T/2, 3T/4`` (at least 2)."""
    return sorted({max(2, length * k // 8) for k in (1, 2, 4, 6)})


def fit_slope(values) -> np.ndarray:
    """OLS slope of each column regressed on ``linspace(0, 1, len(values))``."""
    y, single = _as_2d(values)
    L = y.shape[0]
    if L < 2:
        raise ValueError("need at least two points to fit a slope")
    x = np.linspace(0.0, 1.0, L)
    xc = x - x.mean()
    slope = xc @ (y - y.mean(axis=0)) / (xc @ xc)
    return slope[0] if single else slope


@dataclass
class BurnOutReport:
    """Per-parameter outcome of the convergence check.

    ``t_burn_out`` is 0 and ``slope`` is the slope of the shortest candidate
    where no candidate passed.
    """

    t_burn_out: np.ndarray
    slope: np.ndarray
    converged: np.ndarray
    threshold: float
    mode: str
    windows: list[int]

    def __len__(self):
        return self.t_burn_out.size


def detect_burn_out(trace, windows=None, threshold: float = 0.05, mode: str = "normalized") -> BurnOutReport:
    """Longest trailing window whose fitted slope is below ``threshold``.

    In ``"normalized"`` mode each window is divided by its value range (when
    non-zero) before fitting, making the threshold unit-free; ``"raw"`` fits
    the values as they are.
    """
    y, _ = _as_2d(trace)
    T, P = y.shape
    windows = default_windows(T) if windows is None else sorted({int(w) for w in windows})
    if not windows:
        raise ValueError("no candidate windows")
    if windows[0] < 2:
        raise ValueError("candidate windows must have length >= 2")
    if windows[-1] > T:
        raise ValueError(f"candidate window {windows[-1]} exceeds trace length {T}")
    if mode not in ("normalized", "raw"):
        raise ValueError(f"unknown mode {mode!r}")

    t_burn = np.zeros(P, dtype=int)
    slopes = np.full(P, np.nan)
    for L in windows:
        win = y[T - L :]
        s = fit_slope(win)
        if mode == "normalized":
            rng = win.max(axis=0) - win.min(axis=0)
            s = np.where(rng > 0, s / np.where(rng > 0, rng, 1.0), s)
        ok = np.abs(s) < threshold
        t_burn = np.where(ok, L, t_burn)
        slopes = np.where(ok | np.isnan(slopes), s, slopes)
    return BurnOutReport(t_burn, slopes, t_burn > 0, threshold, mode, windows)


def iterate_average(trace, t_burn_out) -> np.ndarray:
    """Mean of the trailing ``t_burn_out`` snapshots, per coordinate.

    ``t_burn_out`` may be a scalar or one length per column.
    """
    y, single = _as_2d(trace)
    T = y.shape[0]
    lengths = np.broadcast_to(np.asarray(t_burn_out, dtype=int), (y.shape[1],))
    if np.any(lengths < 1) or np.any(lengths > T):
        raise ValueError(f"burn-out window must lie in [1, {T}]")
    # cumulative sums from the end give every trailing mean in one pass
    tail = np.cumsum(y[::-1], axis=0)
    out = tail[lengths - 1, np.arange(y.shape[1])] / lengths
    return out[0] if single else out


def estimate_dp_noise_variance(trace, t_burn_out) -> np.ndarray:
    """Unbiased (``n - 1``) variance over the trailing window."""
    y, single = _as_2d(trace)
    lengths = np.broadcast_to(np.asarray(t_burn_out, dtype=int), (y.shape[1],))
    if np.any(lengths < 2):
        raise ValueError("variance needs a window of at least 2")
    if np.any(lengths > y.shape[0]):
        raise ValueError("window exceeds trace length")
    out = np.array([y[-L:, j].var(ddof=1) for j, L in enumerate(lengths)])
    return out[0] if single else out


@dataclass
class NoiseAwarePosterior:
    """Averaged variational parameters with DP-inflated marginal variances.

    ``inflated_marginal_var`` is NaN for coordinates whose mean trace did not
    converge; ``trace_var_scale`` is reported but never folded in.
    """

    mean: np.ndarray
    scale_params: np.ndarray
    posterior_var: np.ndarray
    trace_var_m: np.ndarray
    trace_var_scale: np.ndarray
    inflated_marginal_var: np.ndarray
    converged: np.ndarray
    t_burn_out: np.ndarray
    transform: Transform = Transform.SOFTPLUS
    full_rank: bool = False

    @property
    def inflation_factor(self) -> np.ndarray:
        return self.inflated_marginal_var / self.posterior_var


def build_noise_aware_posterior(
    trace,
    report: BurnOutReport,
    dim: int | None = None,
    transform=Transform.SOFTPLUS,
    full_rank: bool = False,
) -> NoiseAwarePosterior:
    """Average each converged trace and inflate marginal variances.

    ``trace`` is either a :class:`dpvi.trainer.Trace` or a raw
    ``(iterations, parameters)`` array laid out as ``[m, scale params]``.
    Non-converged parameters fall back to the last iterate.
    """
    if hasattr(trace, "snapshots"):
        dim, transform, full_rank = trace.dim, trace.transform, trace.full_rank
        values = trace.snapshots
    else:
        values = np.asarray(trace, dtype=float)
        if dim is None:
            dim = values.shape[1] // 2
    transform = Transform.parse(transform)
    if len(report) != values.shape[1]:
        raise ValueError("report does not match the number of trace columns")
    if not np.any(report.converged[:dim]):
        raise AnalysisError("no mean parameter converged; nothing to average")

    lengths = np.where(report.converged, report.t_burn_out, 1)
    avg = iterate_average(values, lengths)
    var_len = np.where(report.converged & (lengths >= 2), lengths, 2)
    tvar = np.where(report.converged, estimate_dp_noise_variance(values, var_len), np.nan)

    m_bar, scale_bar = avg[:dim], avg[dim:]
    if full_rank:
        L = cholesky_factor(scale_bar, transform)
        post_var = np.einsum("ij,ij->i", L, L)
    else:
        post_var = np.asarray(transform_value(transform, scale_bar)) ** 2
    conv_m = report.converged[:dim]
    inflated = np.where(conv_m, post_var + np.nan_to_num(tvar[:dim]), np.nan)
    return NoiseAwarePosterior(
        mean=m_bar,
        scale_params=scale_bar,
        posterior_var=post_var,
        trace_var_m=tvar[:dim],
        trace_var_scale=tvar[dim:],
        inflated_marginal_var=inflated,
        converged=report.converged.copy(),
        t_burn_out=report.t_burn_out.copy(),
        transform=transform,
        full_rank=full_rank,
    )


@dataclass
class OuSimConfig:
    """Noisy gradient descent on ``L(xi) = xi^T A xi / 2`` around ``xi* = 0``.

    Each step is ``xi <- xi - lr * (A xi + B eta + sigma_dp psi)`` with
    independent standard normals ``eta`` and ``psi``.
    """

    curvature: np.ndarray
    step_size: float
    sigma_dp: float = 0.0
    subsample_chol: np.ndarray | None = None
    steps: int = 10_000
    start: np.ndarray | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.curvature, dtype=float))
        if A.shape[0] != A.shape[1] or not np.allclose(A, A.T):
            raise ValueError("curvature must be a symmetric matrix")
        self.curvature = A
        d = A.shape[0]
        B = np.zeros((d, d)) if self.subsample_chol is None else np.atleast_2d(np.asarray(self.subsample_chol, float))
        if B.shape != (d, d):
            raise ValueError("subsample_chol must match the curvature shape")
        self.subsample_chol = B

    @property
    def dim(self) -> int:
        return self.curvature.shape[0]

    def stationary_covariance(self) -> np.ndarray:
        """Exact stationary covariance of the discrete recursion.

        In the eigenbasis of ``A`` it solves ``S = F S F + lr^2 Q`` with
        ``F = I - lr A`` and ``Q = B B^T + sigma_dp^2 I``.
        """
        lam, V = np.linalg.eigh(self.curvature)
        f = 1.0 - self.step_size * lam
        Q = self.subsample_chol @ self.subsample_chol.T + self.sigma_dp**2 * np.eye(self.dim)
        Qr = V.T @ Q @ V
        S = self.step_size**2 * Qr / (1.0 - np.outer(f, f))
        return V @ S @ V.T


def simulate_dp_sgd_quadratic(cfg: OuSimConfig, seed=None) -> np.ndarray:
    """Simulate the recursion; returns ``(steps, dim)`` post-update iterates.

    The linear recursion decouples in the eigenbasis of ``A``, where each
    coordinate is an AR(1) filter.
    """
    lam, V = np.linalg.eigh(cfg.curvature)
    if lam.min() <= 0:
        raise ValueError("curvature must be positive definite")
    if cfg.step_size * lam.max() >= 2:
        raise ValueError("step size too large: lr * lambda_max must be below 2")
    rng = np.random.default_rng(seed)
    d, n = cfg.dim, cfg.steps
    noise = rng.standard_normal((n, d)) @ cfg.subsample_chol.T
    if cfg.sigma_dp:
        noise = noise + cfg.sigma_dp * rng.standard_normal((n, d))
    drive = -cfg.step_size * (noise @ V)
    start = np.zeros(d) if cfg.start is None else V.T @ np.asarray(cfg.start, dtype=float)
    z = np.empty((n, d))
    for j in range(d):
        phi = 1.0 - cfg.step_size * lam[j]
        z[:, j], _ = lfilter([1.0], [1.0, -phi], drive[:, j], zi=[phi * start[j]])
    return z @ V.T
