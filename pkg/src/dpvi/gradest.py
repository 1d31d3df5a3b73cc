"""Per-example gradient estimators for DP variational inference.

Each estimator turns per-example model gradients at a single reparametrized
draw ``theta = m + T(s) * eta`` into the rows that DP-SGD clips, and (for the
aligned estimators) reconstructs the scale gradient from the privatized mean
gradient afterwards. Clipping and noise live in :mod:`dpvi.privacy`.

Variants and what gets clipped per example:

==================  ==============================================
vanilla             ``[g_m, g_s]``
aligned             ``g_m``; scale gradient rebuilt after noise
preconditioned      ``[g_m, g_s / T'(s)]``
natural             ``[I_m^-1 g_m, I_s^-1 g_s]`` (diagonal Fisher)
aligned-natural     ``I_m^-1 g_m``; scale gradient rebuilt after noise
full-rank-vanilla   ``[g_m, g_a]``
full-rank-aligned   ``g_m``; packed Cholesky gradient rebuilt after noise
==================  ==============================================
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from dpvi.guide import (
    DiagonalGuide,
    FullRankGuide,
    diag_slots,
    entropy_grad_a,
    entropy_grad_s,
    tril_indices,
)
from dpvi.transforms import transform_deriv


class ConfigError(ValueError):
    """Estimator used with an incompatible guide or in the wrong stage."""


class Variant(str, enum.Enum):
    VANILLA = "vanilla"
    ALIGNED = "aligned"
    PRECONDITIONED = "preconditioned"
    NATURAL = "natural"
    ALIGNED_NATURAL = "aligned-natural"
    FULL_RANK_VANILLA = "full-rank-vanilla"
    FULL_RANK_ALIGNED = "full-rank-aligned"

    @classmethod
    def parse(cls, v: "Variant | str") -> "Variant":
        if isinstance(v, cls):
            return v
        key = str(v).strip().lower().replace("_", "-")
        try:
            return cls(key)
        except ValueError:
            names = ", ".join(x.value for x in cls)
            raise ValueError(f"unknown variant {v!r}; choose from {names}") from None

    @property
    def full_rank(self) -> bool:
        return self in (Variant.FULL_RANK_VANILLA, Variant.FULL_RANK_ALIGNED)

    @property
    def aligned(self) -> bool:
        """True when only the mean gradient is privatized."""
        return self in (Variant.ALIGNED, Variant.ALIGNED_NATURAL, Variant.FULL_RANK_ALIGNED)


# Clip thresholds used for the mean-field runs in the original experiments.
DEFAULT_CLIP = {
    Variant.VANILLA: 2.0,
    Variant.ALIGNED: 2.0,
    Variant.PRECONDITIONED: 4.0,
    Variant.NATURAL: 0.1,
    Variant.ALIGNED_NATURAL: 0.1,
    Variant.FULL_RANK_VANILLA: 0.2,
    Variant.FULL_RANK_ALIGNED: 0.2,
}

# Logistic regression on Adult used these instead.
ADULT_CLIP = {
    Variant.ALIGNED: 3.0,
    Variant.ALIGNED_NATURAL: 0.1,
    Variant.NATURAL: 0.1,
    Variant.VANILLA: 3.0,
    Variant.PRECONDITIONED: 4.0,
}


def check_compatible(variant: Variant, guide) -> None:
    variant = Variant.parse(variant)
    if variant.full_rank and not isinstance(guide, FullRankGuide):
        raise ConfigError(f"{variant.value} requires a FullRankGuide")
    if not variant.full_rank and not isinstance(guide, DiagonalGuide):
        raise ConfigError(f"{variant.value} requires a DiagonalGuide")


def row_dim(variant: Variant, d: int) -> int:
    """Length of the per-example vector submitted to clipping."""
    variant = Variant.parse(variant)
    if variant.aligned:
        return d
    if variant is Variant.FULL_RANK_VANILLA:
        return d + d * (d + 1) // 2
    return 2 * d


@dataclass
class UpdateGradient:
    """Ascent direction on the ELBO for the mean and scale parameters."""

    g_m: np.ndarray
    g_scale: np.ndarray
    mean_norm_m: float = float("nan")
    mean_norm_scale: float = float("nan")

    def concat(self) -> np.ndarray:
        return np.concatenate([self.g_m, self.g_scale])


def draw_theta(guide, eta) -> np.ndarray:
    return guide.draw(eta)


def per_example_gm(model, theta, X, y, n_total: int) -> np.ndarray:
    """Rows ``grad log p(x|theta) + grad log p(theta) / N``.

    Since ``d theta / d m`` is the identity this is also the per-example
    mean gradient.
    """
    G = model.loglik_grad(X, y, theta)
    return G + model.log_prior_grad(theta) / n_total


def per_example_gs(g_mx, eta, guide: DiagonalGuide, n_total: int) -> np.ndarray:
    """Rows ``eta * T'(s) * g_m,x + grad_s H / N`` (mean-field only)."""
    g_mx = np.asarray(g_mx, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if g_mx.shape[-1] != guide.dim or eta.shape != (guide.dim,):
        raise ValueError("dimension mismatch between gradient rows, noise draw and guide")
    tprime = transform_deriv(guide.transform, guide.s)
    return (eta * tprime) * g_mx + entropy_grad_s(guide) / n_total


def fisher_inverse_diag(guide: DiagonalGuide) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form inverse diagonal Fisher blocks ``(I_m^-1, I_s^-1)``.

    For ``N(m, sigma^2)`` with ``sigma = T(s)``: ``I_m = 1/sigma^2`` and
    ``I_s = 2 T'(s)^2 / sigma^2``.
    """
    sigma2 = guide.sigma**2
    tprime = transform_deriv(guide.transform, guide.s)
    return sigma2, sigma2 / (2.0 * tprime**2)


def fullrank_scale_rows(g_mx, eta, guide: FullRankGuide) -> np.ndarray:
    """Data part of the packed Cholesky gradient, one row per ``g_m`` row.

    ``d theta_i / d L_ij = eta_j``; diagonal slots pick up ``T'(a_ii)``.
    """
    g_mx = np.asarray(g_mx, dtype=float)
    squeeze = g_mx.ndim == 1
    g_mx = np.atleast_2d(g_mx)
    d = guide.dim
    rows, cols = tril_indices(d)
    out = g_mx[:, rows] * np.asarray(eta, dtype=float)[cols]
    slots = diag_slots(d)
    out[:, slots] *= transform_deriv(guide.transform, guide.a[slots])
    return out[0] if squeeze else out


def build_per_example_batch(variant, guide, model, X, y, eta, n_total: int):
    """Per-example rows to clip, plus the intermediate pieces the caller may reuse.

    Returns:
        (rows, theta) where ``rows`` has shape ``(batch, row_dim)``.
    """
    variant = Variant.parse(variant)
    check_compatible(variant, guide)
    eta = np.asarray(eta, dtype=float)
    theta = guide.draw(eta)
    g_m = per_example_gm(model, theta, X, y, n_total)

    if variant is Variant.VANILLA:
        rows = np.hstack([g_m, per_example_gs(g_m, eta, guide, n_total)])
    elif variant in (Variant.ALIGNED, Variant.FULL_RANK_ALIGNED):
        rows = g_m
    elif variant is Variant.PRECONDITIONED:
        tprime = transform_deriv(guide.transform, guide.s)
        rows = np.hstack([g_m, per_example_gs(g_m, eta, guide, n_total) / tprime])
    elif variant is Variant.NATURAL:
        inv_m, inv_s = fisher_inverse_diag(guide)
        rows = np.hstack([inv_m * g_m, inv_s * per_example_gs(g_m, eta, guide, n_total)])
    elif variant is Variant.ALIGNED_NATURAL:
        inv_m, _ = fisher_inverse_diag(guide)
        rows = inv_m * g_m
    else:  # FULL_RANK_VANILLA
        g_a = fullrank_scale_rows(g_m, eta, guide) + entropy_grad_a(guide) / n_total
        rows = np.hstack([g_m, g_a])
    return rows, theta


def postprocess_scale(variant, g_m_noised, eta, guide, entropy_weight: float = 1.0) -> np.ndarray:
    """Rebuild the scale gradient from a privatized (summed) mean gradient.

    ``entropy_weight`` is the number of examples the privatized sum stands
    for, divided by ``N``: 1 for a full pass, ``q`` under subsampling. It must
    not depend on the realized batch size, which is itself private.
    """
    variant = Variant.parse(variant)
    if not variant.aligned:
        raise ConfigError(f"{variant.value} privatizes its scale gradient directly")
    check_compatible(variant, guide)
    g = np.asarray(g_m_noised, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if variant is Variant.FULL_RANK_ALIGNED:
        return fullrank_scale_rows(g, eta, guide) + entropy_weight * entropy_grad_a(guide)
    tprime = transform_deriv(guide.transform, guide.s)
    ent = entropy_weight * entropy_grad_s(guide)
    if variant is Variant.ALIGNED:
        return eta * tprime * g + ent
    # aligned-natural: recover the plain mean gradient with I_m, then apply I_s^-1
    inv_m, inv_s = fisher_inverse_diag(guide)
    return inv_s * (eta * tprime * (g / inv_m) + ent)


def split_rows(variant, total, d: int) -> tuple[np.ndarray, np.ndarray | None]:
    """Split a summed (and noised) row vector into mean and scale parts."""
    variant = Variant.parse(variant)
    if variant.aligned:
        return total, None
    return total[:d], total[d:]
