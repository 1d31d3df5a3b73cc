"""Positivity transforms mapping unconstrained scales to standard deviations.

All functions accept scalars or arrays and apply elementwise.
"""

from __future__ import annotations

import enum

import numpy as np

_SOFTPLUS_LINEAR = 30.0


class Transform(str, enum.Enum):
    SOFTPLUS = "softplus"
    EXP = "exp"

    @classmethod
    def parse(cls, kind: "Transform | str") -> "Transform":
        if isinstance(kind, cls):
            return kind
        try:
            return cls(str(kind).lower())
        except ValueError:
            raise ValueError(f"unknown transform {kind!r}; expected 'softplus' or 'exp'") from None


def _check_finite(s):
    s = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(s)):
        raise ValueError("transform input must be finite")
    return s


def _out(x):
    return x.item() if x.ndim == 0 else x


def softplus(s):
    s = np.asarray(s, dtype=float)
    # max(s, 0) + log1p(exp(-|s|)): never overflows, and keeps full relative
    # precision for very negative s where log(1 + exp(s)) rounds to zero.
    return np.maximum(s, 0.0) + np.log1p(np.exp(-np.abs(s)))


def sigmoid(s):
    s = np.asarray(s, dtype=float)
    e = np.exp(-np.abs(s))
    return np.where(s >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def transform_value(kind, s):
    """Positive scale ``T(s)``."""
    kind = Transform.parse(kind)
    s = _check_finite(s)
    if kind is Transform.EXP:
        return _out(np.exp(s))
    return _out(softplus(s))


def transform_deriv(kind, s):
    """Derivative ``T'(s)``; the sigmoid for softplus."""
    kind = Transform.parse(kind)
    s = _check_finite(s)
    if kind is Transform.EXP:
        return _out(np.exp(s))
    return _out(sigmoid(s))


def transform_inverse(kind, sigma):
    """Unconstrained ``s`` with ``T(s) == sigma``.

    Raises:
        ValueError: if any ``sigma`` is not strictly positive.
    """
    kind = Transform.parse(kind)
    sigma = np.asarray(sigma, dtype=float)
    if not np.all(np.isfinite(sigma)) or np.any(sigma <= 0):
        raise ValueError("transform_inverse requires finite sigma > 0")
    if kind is Transform.EXP:
        return _out(np.log(sigma))
    # log(expm1(sigma)), rewritten as sigma + log(-expm1(-sigma)) for large sigma
    big = sigma > _SOFTPLUS_LINEAR
    small = np.log(np.expm1(np.where(big, 1.0, sigma)))
    large = sigma + np.log(-np.expm1(-np.where(big, sigma, 1.0)))
    return _out(np.where(big, large, small))
