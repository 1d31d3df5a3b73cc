"""Gaussian variational families: mean-field and full-rank (Cholesky).

The full-rank scale parameter ``a`` packs the lower triangle of the Cholesky
factor row by row: ``(0,0), (1,0), (1,1), (2,0), (2,1), (2,2), ...``.
Diagonal slots pass through the positivity transform; off-diagonal slots
enter the factor unchanged, so a full-rank guide with zero off-diagonals is
exactly a mean-field guide.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from dpvi.transforms import Transform, transform_deriv, transform_inverse, transform_value

_ENTROPY_CONST = 0.5 * (1.0 + math.log(2.0 * math.pi))


def packed_size(d: int) -> int:
    return d * (d + 1) // 2


def dim_from_packed(n: int) -> int:
    d = int(round((math.sqrt(8 * n + 1) - 1) / 2))
    if d < 1 or packed_size(d) != n:
        raise ValueError(f"packed length {n} is not a triangular number")
    return d


@lru_cache(maxsize=None)
def tril_indices(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Row-major lower-triangle indices (rows, cols) for the packing order."""
    rows, cols = np.tril_indices(d)
    rows.flags.writeable = False
    cols.flags.writeable = False
    return rows, cols


@lru_cache(maxsize=None)
def diag_slots(d: int) -> np.ndarray:
    """Positions of the diagonal entries inside the packed vector."""
    i = np.arange(d)
    slots = i * (i + 1) // 2 + i
    slots.flags.writeable = False
    return slots


def _vec(x, name):
    x = np.array(x, dtype=float, ndmin=1)
    if x.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    return x


@dataclass
class DiagonalGuide:
    """Mean-field Gaussian ``N(m, diag(T(s))^2)``."""

    m: np.ndarray
    s: np.ndarray
    transform: Transform = Transform.SOFTPLUS

    def __post_init__(self):
        self.m = _vec(self.m, "m")
        self.s = _vec(self.s, "s")
        self.transform = Transform.parse(self.transform)
        if self.m.shape != self.s.shape:
            raise ValueError(f"m has shape {self.m.shape} but s has shape {self.s.shape}")
        if self.m.size < 1:
            raise ValueError("guide dimension must be at least 1")
        if not (np.all(np.isfinite(self.m)) and np.all(np.isfinite(self.s))):
            raise ValueError("guide parameters must be finite")

    @classmethod
    def from_sigma(cls, m, sigma, transform=Transform.SOFTPLUS) -> "DiagonalGuide":
        m = _vec(m, "m")
        sigma = np.broadcast_to(np.asarray(sigma, dtype=float), m.shape)
        return cls(m, transform_inverse(transform, sigma), transform)

    @property
    def dim(self) -> int:
        return self.m.size

    @property
    def scale_size(self) -> int:
        return self.dim

    @property
    def sigma(self) -> np.ndarray:
        return np.asarray(transform_value(self.transform, self.s))

    def marginal_variance(self) -> np.ndarray:
        return self.sigma**2

    def params(self) -> np.ndarray:
        return np.concatenate([self.m, self.s])

    def with_params(self, xi) -> "DiagonalGuide":
        xi = np.asarray(xi, dtype=float)
        return DiagonalGuide(xi[: self.dim], xi[self.dim :], self.transform)

    def param_names(self) -> list[str]:
        return [f"m[{j}]" for j in range(self.dim)] + [f"s[{j}]" for j in range(self.dim)]

    def draw(self, eta) -> np.ndarray:
        return reparam_draw_diag(self, eta)

    def entropy(self) -> float:
        return entropy_diag(self)


@dataclass
class FullRankGuide:
    """Full-covariance Gaussian ``N(m, L L^T)`` with ``L = cholesky_factor(a)``."""

    m: np.ndarray
    a: np.ndarray
    transform: Transform = Transform.SOFTPLUS
    _d: int = field(init=False, repr=False)

    def __post_init__(self):
        self.m = _vec(self.m, "m")
        self.a = _vec(self.a, "a")
        self.transform = Transform.parse(self.transform)
        self._d = dim_from_packed(self.a.size)
        if self._d != self.m.size:
            raise ValueError(f"packed scale of length {self.a.size} does not match dimension {self.m.size}")
        if not (np.all(np.isfinite(self.m)) and np.all(np.isfinite(self.a))):
            raise ValueError("guide parameters must be finite")

    @classmethod
    def from_sigma(cls, m, sigma, transform=Transform.SOFTPLUS) -> "FullRankGuide":
        m = _vec(m, "m")
        d = m.size
        a = np.zeros(packed_size(d))
        sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (d,))
        a[diag_slots(d)] = transform_inverse(transform, sigma)
        return cls(m, a, transform)

    @property
    def dim(self) -> int:
        return self._d

    @property
    def scale_size(self) -> int:
        return self.a.size

    @property
    def cholesky(self) -> np.ndarray:
        return cholesky_factor(self.a, self.transform)

    def marginal_variance(self) -> np.ndarray:
        L = self.cholesky
        return np.einsum("ij,ij->i", L, L)

    def params(self) -> np.ndarray:
        return np.concatenate([self.m, self.a])

    def with_params(self, xi) -> "FullRankGuide":
        xi = np.asarray(xi, dtype=float)
        return FullRankGuide(xi[: self.dim], xi[self.dim :], self.transform)

    def param_names(self) -> list[str]:
        rows, cols = tril_indices(self.dim)
        return [f"m[{j}]" for j in range(self.dim)] + [f"a[{i},{j}]" for i, j in zip(rows, cols)]

    def draw(self, eta) -> np.ndarray:
        return reparam_draw_fullrank(self, eta)

    def entropy(self) -> float:
        return entropy_fullrank(self)


def _check_eta(guide, eta):
    eta = np.asarray(eta, dtype=float)
    if eta.shape[-1] != guide.dim:
        raise ValueError(f"noise draw has length {eta.shape[-1]}, guide dimension is {guide.dim}")
    return eta


def reparam_draw_diag(guide: DiagonalGuide, eta) -> np.ndarray:
    """``theta = m + T(s) * eta``; ``eta`` may carry leading batch axes."""
    eta = _check_eta(guide, eta)
    return guide.m + guide.sigma * eta


def reparam_draw_fullrank(guide: FullRankGuide, eta) -> np.ndarray:
    """``theta = m + L eta``; ``eta`` may carry leading batch axes."""
    eta = _check_eta(guide, eta)
    return guide.m + eta @ guide.cholesky.T


def entropy_diag(guide: DiagonalGuide) -> float:
    return float(np.sum(np.log(guide.sigma)) + guide.dim * _ENTROPY_CONST)


def entropy_fullrank(guide: FullRankGuide) -> float:
    diag = transform_value(guide.transform, guide.a[diag_slots(guide.dim)])
    return float(np.sum(np.log(diag)) + guide.dim * _ENTROPY_CONST)


def entropy_grad_s(guide: DiagonalGuide) -> np.ndarray:
    """Gradient of the entropy w.r.t. ``s``: ``T'(s) / T(s)``."""
    return np.asarray(transform_deriv(guide.transform, guide.s) / transform_value(guide.transform, guide.s))


def cholesky_factor(a, transform=Transform.SOFTPLUS) -> np.ndarray:
    """Unpack ``a`` into a lower-triangular factor with positive diagonal."""
    a = _vec(a, "a")
    d = dim_from_packed(a.size)
    L = np.zeros((d, d))
    L[tril_indices(d)] = a
    idx = np.arange(d)
    L[idx, idx] = transform_value(transform, a[diag_slots(d)])
    return L


def entropy_grad_a(guide: FullRankGuide) -> np.ndarray:
    """Packed entropy gradient; nonzero only on the diagonal slots."""
    slots = diag_slots(guide.dim)
    ad = guide.a[slots]
    g = np.zeros_like(guide.a)
    g[slots] = transform_deriv(guide.transform, ad) / transform_value(guide.transform, ad)
    return g


def write_guide_csv(guide: DiagonalGuide | FullRankGuide, path) -> None:
    """One row per parameter: ``name,index,value``; full-rank rows indexed ``i,j``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "index", "value"])
        for j, v in enumerate(guide.m):
            w.writerow(["m", j, repr(float(v))])
        if isinstance(guide, DiagonalGuide):
            for j, v in enumerate(guide.s):
                w.writerow(["s", j, repr(float(v))])
        else:
            rows, cols = tril_indices(guide.dim)
            for i, j, v in zip(rows, cols, guide.a):
                w.writerow(["a", f"{i},{j}", repr(float(v))])


def read_guide_csv(path, transform=Transform.SOFTPLUS) -> DiagonalGuide | FullRankGuide:
    m, s, a = {}, {}, {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            value = float(row["value"])
            if row["name"] == "m":
                m[int(row["index"])] = value
            elif row["name"] == "s":
                s[int(row["index"])] = value
            elif row["name"] == "a":
                i, j = (int(k) for k in row["index"].split(","))
                a[(i, j)] = value
            else:
                raise ValueError(f"unknown guide parameter {row['name']!r}")
    mean = np.array([m[j] for j in range(len(m))])
    if a:
        rows, cols = tril_indices(mean.size)
        return FullRankGuide(mean, [a[(i, j)] for i, j in zip(rows, cols)], transform)
    return DiagonalGuide(mean, [s[j] for j in range(len(s))], transform)
