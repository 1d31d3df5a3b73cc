"""Built-in probabilistic models with per-example log-likelihood gradients.

Every model evaluates a whole batch at once: ``X`` is ``(n, p)``, ``y`` is
``(n,)`` and ``theta`` is a single parameter vector. Per-example quantities
come back with a leading batch axis.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, log_expit

_LOG_2PI = math.log(2.0 * math.pi)


class DataError(ValueError):
    """Raised for targets or features outside a model's support."""


@dataclass
class Dataset:
    features: np.ndarray
    targets: np.ndarray
    columns: list[str] = field(default_factory=list)
    target_name: str = "y"

    def __post_init__(self):
        self.features = np.array(self.features, dtype=float, ndmin=2)
        self.targets = np.array(self.targets, dtype=float, ndmin=1)
        if self.features.shape[0] < 1:
            raise DataError("dataset must contain at least one row")
        if self.features.shape[0] != self.targets.shape[0]:
            raise DataError("features and targets disagree on the number of rows")
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.targets))):
            raise DataError("dataset contains non-finite values")
        if not self.columns:
            self.columns = [f"x{j}" for j in range(self.features.shape[1])]

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def standardized(self) -> "Dataset":
        mu = self.features.mean(axis=0)
        sd = self.features.std(axis=0)
        sd[sd == 0] = 1.0
        return Dataset((self.features - mu) / sd, self.targets, list(self.columns), self.target_name)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([*self.columns, self.target_name])
            for x, y in zip(self.features, self.targets):
                w.writerow([repr(float(v)) for v in x] + [repr(float(y))])

    @classmethod
    def from_csv(cls, path, target: str = "y", standardize: bool = False) -> "Dataset":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if target not in header:
                raise DataError(f"target column {target!r} not in {header}")
            rows = np.array([[float(v) for v in row] for row in reader if row], dtype=float)
        if rows.size == 0:
            raise DataError(f"{path} has no data rows")
        k = header.index(target)
        cols = [c for j, c in enumerate(header) if j != k]
        data = cls(np.delete(rows, k, axis=1), rows[:, k], cols, target)
        return data.standardized() if standardize else data


class Model:
    """Base class. Subclasses implement the likelihood; the prior defaults to N(0, I)."""

    name = "model"

    def __init__(self, n_features: int):
        if n_features < 1:
            raise ValueError("feature count must be at least 1")
        self.n_features = n_features

    @property
    def dim(self) -> int:
        return self.n_features

    def param_labels(self) -> list[str]:
        return [f"w{j}" for j in range(self.n_features)]

    def check_targets(self, y) -> None:
        pass

    def loglik(self, X, y, theta) -> np.ndarray:
        raise NotImplementedError

    def loglik_grad(self, X, y, theta) -> np.ndarray:
        raise NotImplementedError

    def log_prior(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        return float(-0.5 * theta @ theta - 0.5 * theta.size * _LOG_2PI)

    def log_prior_grad(self, theta) -> np.ndarray:
        return -np.asarray(theta, dtype=float)

    def log_joint(self, X, y, theta) -> float:
        return float(np.sum(self.loglik(X, y, theta)) + self.log_prior(theta))

    def simulate(self, X, theta, rng) -> np.ndarray:
        raise NotImplementedError


class LogisticRegression(Model):
    """Bernoulli targets with ``p(y=1) = sigmoid(x.w)``; ``w ~ N(0, I)``."""

    name = "logistic"

    def check_targets(self, y):
        y = np.asarray(y)
        if not np.all((y == 0) | (y == 1)):
            raise DataError("logistic regression targets must be 0 or 1")

    def loglik(self, X, y, theta):
        self.check_targets(y)
        z = np.asarray(X) @ theta
        return y * log_expit(z) + (1.0 - y) * log_expit(-z)

    def loglik_grad(self, X, y, theta):
        self.check_targets(y)
        X = np.asarray(X)
        z = X @ theta
        resid = y - np.exp(log_expit(z))
        return resid[:, None] * X

    def simulate(self, X, theta, rng):
        p = np.exp(log_expit(np.asarray(X) @ theta))
        return (rng.random(p.shape) < p).astype(float)


class PoissonRegression(Model):
    """Count targets with rate ``exp(x.w)``; ``w ~ N(0, I)``."""

    name = "poisson"

    def check_targets(self, y):
        y = np.asarray(y)
        if np.any(y < 0) or np.any(y != np.floor(y)):
            raise DataError("Poisson regression targets must be non-negative integers")

    def loglik(self, X, y, theta):
        self.check_targets(y)
        z = np.asarray(X) @ theta
        return y * z - np.exp(z) - gammaln(y + 1.0)

    def loglik_grad(self, X, y, theta):
        self.check_targets(y)
        X = np.asarray(X)
        return (y - np.exp(X @ theta))[:, None] * X

    def simulate(self, X, theta, rng):
        return rng.poisson(np.exp(np.asarray(X) @ theta)).astype(float)


class LinearRegression(Model):
    """Gaussian targets ``y ~ N(x.w, exp(u)^2)``.

    The parameter vector is ``(w, u)`` with ``u = log sigma_y``. The prior is
    ``w ~ N(0, I)`` and ``sigma_y ~ Gamma(shape, rate)``, carried to ``u``
    with the log-Jacobian ``+u``.
    """

    name = "linear"

    def __init__(self, n_features: int, noise_shape: float = 0.1, noise_rate: float = 0.1):
        super().__init__(n_features)
        self.noise_shape = noise_shape
        self.noise_rate = noise_rate

    @property
    def dim(self):
        return self.n_features + 1

    def param_labels(self):
        return super().param_labels() + ["log_sigma_y"]

    def loglik(self, X, y, theta):
        theta = np.asarray(theta, dtype=float)
        w, u = theta[:-1], theta[-1]
        r = y - np.asarray(X) @ w
        return -0.5 * _LOG_2PI - u - 0.5 * r * r * math.exp(-2.0 * u)

    def loglik_grad(self, X, y, theta):
        theta = np.asarray(theta, dtype=float)
        X = np.asarray(X)
        w, u = theta[:-1], theta[-1]
        inv_var = math.exp(-2.0 * u)
        r = y - X @ w
        g = np.empty((X.shape[0], theta.size))
        g[:, :-1] = (r * inv_var)[:, None] * X
        g[:, -1] = r * r * inv_var - 1.0
        return g

    def log_prior(self, theta):
        theta = np.asarray(theta, dtype=float)
        w, u = theta[:-1], theta[-1]
        a, b = self.noise_shape, self.noise_rate
        lp_w = -0.5 * w @ w - 0.5 * w.size * _LOG_2PI
        # Gamma(a, b) density of exp(u) times the Jacobian exp(u)
        lp_u = a * math.log(b) - math.lgamma(a) + a * u - b * math.exp(u)
        return float(lp_w + lp_u)

    def log_prior_grad(self, theta):
        theta = np.asarray(theta, dtype=float)
        g = -theta.copy()
        g[-1] = self.noise_shape - self.noise_rate * math.exp(theta[-1])
        return g

    def simulate(self, X, theta, rng):
        theta = np.asarray(theta, dtype=float)
        mu = np.asarray(X) @ theta[:-1]
        return mu + math.exp(theta[-1]) * rng.standard_normal(mu.shape)


class ConjugateLinearRegression(Model):
    """Gaussian targets with known noise scale and ``w ~ N(0, prior_var I)``.

    The posterior is Gaussian in closed form, which makes this the reference
    model for checking the optimizer end to end.
    """

    name = "conjugate-linear"

    def __init__(self, n_features: int, noise_std: float = 1.0, prior_var: float = 1.0):
        super().__init__(n_features)
        self.noise_std = float(noise_std)
        self.prior_var = float(prior_var)

    def loglik(self, X, y, theta):
        r = y - np.asarray(X) @ theta
        s2 = self.noise_std**2
        return -0.5 * (_LOG_2PI + math.log(s2)) - 0.5 * r * r / s2

    def loglik_grad(self, X, y, theta):
        X = np.asarray(X)
        r = y - X @ theta
        return (r / self.noise_std**2)[:, None] * X

    def log_prior(self, theta):
        theta = np.asarray(theta, dtype=float)
        v = self.prior_var
        return float(-0.5 * theta @ theta / v - 0.5 * theta.size * (_LOG_2PI + math.log(v)))

    def log_prior_grad(self, theta):
        return -np.asarray(theta, dtype=float) / self.prior_var

    def simulate(self, X, theta, rng):
        mu = np.asarray(X) @ theta
        return mu + self.noise_std * rng.standard_normal(mu.shape)

    def posterior(self, X, y) -> tuple[np.ndarray, np.ndarray]:
        """Exact posterior mean and covariance."""
        X = np.asarray(X, dtype=float)
        prec = np.eye(self.n_features) / self.prior_var + X.T @ X / self.noise_std**2
        cov = np.linalg.inv(prec)
        return cov @ (X.T @ np.asarray(y, dtype=float)) / self.noise_std**2, cov


MODELS = {
    "logistic": LogisticRegression,
    "linear": LinearRegression,
    "poisson": PoissonRegression,
    "conjugate-linear": ConjugateLinearRegression,
}


def make_model(name: str, n_features: int) -> Model:
    try:
        return MODELS[name](n_features)
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None


# Functional aliases matching the operation names used elsewhere.
def logistic_regression_model(p: int) -> LogisticRegression:
    return LogisticRegression(p)


def linear_regression_model(p: int) -> LinearRegression:
    return LinearRegression(p)


def poisson_regression_model(p: int) -> PoissonRegression:
    return PoissonRegression(p)
