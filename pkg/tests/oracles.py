"""Independent reference computations shared by unit and acceptance tests.

Each helper computes its quantity directly from definitions (finite
differences, explicit matrices, brute-force Monte Carlo) rather than through
the closed forms the library uses.
"""

from __future__ import annotations

import numpy as np

from dpvi.gradest import Variant, build_per_example_batch, per_example_gm, per_example_gs, postprocess_scale
from dpvi.guide import DiagonalGuide, entropy_diag
from dpvi.metrics import rel_error
from dpvi.models import LogisticRegression
from dpvi.transforms import transform_deriv, transform_inverse, transform_value


def single_sample_elbo(model, X, y, m, s, eta, transform) -> float:
    """log p(D, m + T(s) eta) + H(q) for one fixed draw ``eta``."""
    theta = m + transform_value(transform, s) * eta
    return float(model.loglik(X, y, theta).sum() + model.log_prior(theta) + entropy_diag(DiagonalGuide(m, s, transform)))


def scale_gradient_case(rng, n: int = 8, d: int = 3, h: float = 1e-5):
    """Summed per-example s-gradients next to a finite-difference oracle.

    Uses a fourth-order central stencil so truncation error stays well
    below the comparison tolerance.
    """
    transform = "softplus" if rng.random() < 0.5 else "exp"
    model = LogisticRegression(d)
    X = rng.normal(size=(n, d))
    y = (rng.random(n) < 0.5).astype(float)
    m = rng.normal(scale=0.5, size=d)
    s = rng.uniform(-2.0, 0.5, size=d)
    eta = rng.normal(size=d)
    guide = DiagonalGuide(m, s, transform)
    theta = guide.draw(eta)
    g_m = per_example_gm(model, theta, X, y, n)
    analytic = per_example_gs(g_m, eta, guide, n).sum(axis=0)

    def f(x):
        return single_sample_elbo(model, X, y, m, x, eta, transform)

    fd = np.empty(d)
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        fd[j] = (-f(s + 2 * e) + 8 * f(s + e) - 8 * f(s - e) + f(s - 2 * e)) / (12 * h)
    return analytic, fd


def explicit_natural(guide: DiagonalGuide, g_m, g_s):
    """Natural gradient from an explicitly assembled diagonal Fisher matrix."""
    sigma = guide.sigma
    tprime = transform_deriv(guide.transform, guide.s)
    fisher = np.diag(np.concatenate([1.0 / sigma**2, 2.0 * tprime**2 / sigma**2]))
    return np.linalg.solve(fisher, np.concatenate([g_m, g_s]))


def coupled_scale_variances(rng, n_draws: int = 10_000, n: int = 10, d: int = 3, sigma_dp: float = 1.0, c_aligned: float = 1.0):
    """Per-coordinate variance of privatized scale gradients, aligned vs vanilla.

    The batch and the guide (``T(s) = 0.1`` through softplus) stay fixed;
    only ``eta`` and ``psi`` are redrawn. For every draw, the vanilla rows get
    the same clipping multiplier as the aligned rows, and the vanilla noise is
    scaled by ``C' * max_x |g_x| / |g_m,x|``, the smallest single threshold
    that bounds every row after that clipping.
    """
    model = LogisticRegression(d)
    X = rng.normal(size=(n, d))
    y = (rng.random(n) < 0.5).astype(float)
    guide = DiagonalGuide(rng.normal(size=d), np.full(d, transform_inverse("softplus", 0.1)), "softplus")
    aligned = np.empty((n_draws, d))
    vanilla = np.empty((n_draws, d))
    for k in range(n_draws):
        eta = rng.normal(size=d)
        full, _ = build_per_example_batch(Variant.VANILLA, guide, model, X, y, eta, n)
        g_m = full[:, :d]
        norm_m = np.linalg.norm(g_m, axis=1)
        gamma = np.minimum(1.0, c_aligned / norm_m)
        c_vanilla = c_aligned * np.max(np.linalg.norm(full, axis=1) / norm_m)

        psi_m = rng.normal(size=d)
        psi_v = rng.normal(size=2 * d)
        noisy_m = (gamma[:, None] * g_m).sum(axis=0) + sigma_dp * c_aligned * psi_m
        aligned[k] = postprocess_scale(Variant.ALIGNED, noisy_m, eta, guide)
        noisy_v = (gamma[:, None] * full).sum(axis=0) + sigma_dp * c_vanilla * psi_v
        vanilla[k] = noisy_v[d:]
    return aligned.var(axis=0, ddof=1), vanilla.var(axis=0, ddof=1)


def worst_rel_error(pairs) -> float:
    return max(float(rel_error(a, b).max()) for a, b in pairs)
