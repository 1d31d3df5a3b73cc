"""Synthetic data sets standing in for the restricted real data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dpvi.models import Dataset


class GenerationError(RuntimeError):
    pass


def _fill_correlations(d, rho, a, b, rng) -> tuple[np.ndarray, int]:
    n_pairs = d * (d - 1) // 2
    k = int(round(rho * n_pairs))
    C = np.eye(d)
    if k:
        iu, ju = np.triu_indices(d, 1)
        pick = rng.choice(n_pairs, size=k, replace=False)
        vals = rng.beta(a, b, size=k) * rng.choice([-1.0, 1.0], size=k)
        C[iu[pick], ju[pick]] = vals
        C[ju[pick], iu[pick]] = vals
    return C, k


def repair_correlation(C, floor: float = 1e-6, max_iter: int = 10) -> np.ndarray:
    """Clip eigenvalues and rescale to unit diagonal until ``min eig >= floor``.

    Rescaling can pull the smallest eigenvalue back under the clip level, so
    the clip level doubles on every retry.
    """
    C = np.array(C, dtype=float)
    clip = floor
    for _ in range(max_iter + 1):
        lam, V = np.linalg.eigh(C)
        if lam.min() >= floor:
            return C
        C = (V * np.maximum(lam, clip)) @ V.T
        clip *= 2.0
        s = 1.0 / np.sqrt(np.diag(C))
        C = s[:, None] * C * s[None, :]
        C = 0.5 * (C + C.T)
    if np.linalg.eigvalsh(C).min() >= floor:
        return C
    raise GenerationError("could not repair correlation matrix to positive definiteness")


def sample_correlation_matrix(d: int, rho: float, a: float = 8.0, b: float = 10.0, rng=None, repair: bool = True):
    """Random correlation matrix with a fraction ``rho`` of non-zero pairs.

    Exactly ``round(rho * d(d-1)/2)`` distinct pairs get ``+-Beta(a, b)``
    entries. With ``repair=False`` the raw (possibly indefinite) matrix is
    returned.
    """
    if not 0 <= rho <= 1:
        raise ValueError("rho must lie in [0, 1]")
    rng = np.random.default_rng(rng)
    C, _ = _fill_correlations(d, rho, a, b, rng)
    return repair_correlation(C) if repair else C


@dataclass
class SynthRegressionConfig:
    d: int = 20
    rho: float = 0.2
    beta_a: float = 8.0
    beta_b: float = 10.0
    n: int = 10_000
    noise_std: float = 1.0
    log_scale_std: float = 0.2
    seed: int = 0


@dataclass
class SyntheticRegression:
    train: Dataset
    test: Dataset
    weights: np.ndarray
    covariance: np.ndarray
    correlation: np.ndarray
    raw_correlation: np.ndarray
    n_nonzero_pairs: int


def gen_correlated_regression(cfg: SynthRegressionConfig) -> SyntheticRegression:
    """Linear-regression data with correlated Gaussian features.

    ``Sigma = D C D`` with ``D_ii = exp(N(0, log_scale_std^2))``; train and test
    share ``Sigma`` and the weights.
    """
    rng = np.random.default_rng(cfg.seed)
    raw, k = _fill_correlations(cfg.d, cfg.rho, cfg.beta_a, cfg.beta_b, rng)
    C = repair_correlation(raw)
    D = np.exp(cfg.log_scale_std * rng.standard_normal(cfg.d))
    cov = D[:, None] * C * D[None, :]
    chol = np.linalg.cholesky(cov)
    w = rng.standard_normal(cfg.d)

    def draw():
        X = rng.standard_normal((cfg.n, cfg.d)) @ chol.T
        y = X @ w + cfg.noise_std * rng.standard_normal(cfg.n)
        return Dataset(X, y)

    train = draw()
    test = draw()
    return SyntheticRegression(train, test, w, cov, C, raw, k)


def gen_logistic(n: int = 10_000, p: int = 10, seed: int = 0, weight_scale: float = 1.0) -> tuple[Dataset, np.ndarray]:
    """Standard-normal features, ``w ~ N(0, weight_scale^2 I)``, Bernoulli targets."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    w = weight_scale * rng.standard_normal(p)
    z = X @ w
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-z))).astype(float)
    return Dataset(X, y), w
