"""Evaluation metrics and gradient checking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp


class MetricError(ValueError):
    pass


@dataclass
class MpaeResult:
    value: float
    n_used: int
    n_excluded: int


def mpae(current, optimum, initial, tol: float = 1e-12, detail: bool = False):
    """Mean proportional absolute error.

    ``mean_d |current_d - optimum_d| / |initial_d - optimum_d|``: 0 means the
    optimum was recovered, 1 that parameters did not move on average.
    Coordinates whose initial distance is below ``tol`` are excluded.
    """
    current = np.asarray(current, dtype=float)
    optimum = np.asarray(optimum, dtype=float)
    initial = np.asarray(initial, dtype=float)
    if not current.shape == optimum.shape == initial.shape:
        raise MetricError("mpae inputs must share a shape")
    denom = np.abs(initial - optimum)
    keep = denom >= tol
    if not np.any(keep):
        raise MetricError("every coordinate starts at the optimum; MPAE undefined")
    value = float(np.mean(np.abs(current - optimum)[keep] / denom[keep]))
    if detail:
        return MpaeResult(value, int(keep.sum()), int((~keep).sum()))
    return value


def predictive_loglik(guide, model, dataset, n_samples: int = 200, rng=None) -> float:
    """Average over test rows of ``log mean_s p(y | x, theta_s)``, ``theta_s ~ q``."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    rng = np.random.default_rng(rng)
    eta = rng.standard_normal((n_samples, guide.dim))
    thetas = guide.draw(eta)
    ll = np.stack([model.loglik(dataset.features, dataset.targets, th) for th in thetas])
    return float(np.mean(logsumexp(ll, axis=0) - np.log(n_samples)))


def random_example(model, rng, n: int = 1, scale: float = 0.5):
    """Random ``(X, y, theta)`` inside the model's support."""
    X = scale * rng.standard_normal((n, model.n_features))
    theta = scale * rng.standard_normal(model.dim)
    y = model.simulate(X, theta, rng)
    return X, y, theta


def rel_error(a, b, floor: float = 1e-3) -> np.ndarray:
    """``|a - b| / max(|a|, |b|, floor)``, elementwise."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def central_difference(f, x, h: float = 1e-6) -> np.ndarray:
    """Gradient of a scalar function by central differences."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


@dataclass
class GradCheckReport:
    model: str
    n_points: int
    tolerance: float
    max_rel_error: float
    worst_function: str
    worst_point: int
    worst_coord: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} {self.model}: max relative error {self.max_rel_error:.3e} "
            f"(tolerance {self.tolerance:g}) at {self.worst_function} point {self.worst_point} "
            f"coordinate {self.worst_coord}"
        )


def grad_check(model, n_points: int = 100, tolerance: float = 1e-5, rng=None, h: float = 1e-6) -> GradCheckReport:
    """Compare analytic likelihood and prior gradients with central differences."""
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    rng = np.random.default_rng(rng)
    worst = (0.0, "loglik_grad", -1, -1)
    for k in range(n_points):
        X, y, theta = random_example(model, rng)
        checks = [
            ("loglik_grad", model.loglik_grad(X, y, theta)[0], lambda th: float(model.loglik(X, y, th)[0])),
            ("log_prior_grad", model.log_prior_grad(theta), model.log_prior),
        ]
        for fname, analytic, f in checks:
            err = rel_error(analytic, central_difference(f, theta, h))
            j = int(np.argmax(err))
            if err[j] > worst[0] or worst[2] < 0:
                worst = (float(err[j]), fname, k, j)
    return GradCheckReport(getattr(model, "name", type(model).__name__), n_points, tolerance, *worst)
