"""DP-SGD primitives: clipping, the Gaussian mechanism, Poisson subsampling
and deterministic per-iteration random streams."""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from dpvi.gradest import Variant


class Stream(enum.IntEnum):
    """Purposes with their own independent random stream."""

    SUBSAMPLE = 0
    ETA = 1
    PSI = 2
    INIT = 3
    EVAL = 4


def _seed_key(seed: int) -> int:
    digest = hashlib.sha256(int(seed).to_bytes(16, "little", signed=True)).digest()
    return int.from_bytes(digest[:16], "little")


def stream_rng(seed: int, iteration: int, purpose: Stream) -> np.random.Generator:
    """Philox generator keyed by ``seed``, positioned by ``(iteration, purpose)``.

    Streams never overlap: the iteration and purpose occupy the upper counter
    words, leaving 2**128 blocks for draws within one stream.
    """
    counter = [0, 0, int(iteration) & 0xFFFFFFFFFFFFFFFF, int(purpose)]
    return np.random.Generator(np.random.Philox(key=_seed_key(seed), counter=counter))


class StreamFactory:
    """Repositions a single Philox generator onto ``(iteration, purpose)``.

    Produces exactly the draws of :func:`stream_rng` without rebuilding the
    bit generator. The returned generator is shared, so consume it before the
    next call.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        key = _seed_key(seed)
        self._bitgen = np.random.Philox(key=key)
        self._key = self._bitgen.state["state"]["key"].copy()
        self._gen = np.random.Generator(self._bitgen)

    def __call__(self, iteration: int, purpose: Stream) -> np.random.Generator:
        counter = np.array([0, 0, int(iteration) & 0xFFFFFFFFFFFFFFFF, int(purpose)], dtype=np.uint64)
        self._bitgen.state = {
            "bit_generator": "Philox",
            "state": {"counter": counter, "key": self._key},
            "buffer": np.zeros(4, dtype=np.uint64),
            "buffer_pos": 4,
            "has_uint32": 0,
            "uinteger": 0,
        }
        return self._gen


@dataclass
class DpSgdConfig:
    """Hyperparameters of one DP-SGD run.

    ``noise_multiplier`` may be left as ``None`` when ``target_epsilon`` is
    given; :func:`dpvi.trainer.run_dpvi` then calibrates it. A clip threshold
    of ``math.inf`` disables clipping (non-private runs only).
    """

    variant: Variant = Variant.ALIGNED
    clip_threshold: float | None = None
    noise_multiplier: float | None = 0.0
    subsample_ratio: float = 0.01
    iterations: int = 1000
    delta: float | None = None
    seed: int = 0
    target_epsilon: float | None = None
    learning_rate: float = 1e-3
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.variant = Variant.parse(self.variant)
        if self.clip_threshold is None:
            from dpvi.gradest import DEFAULT_CLIP

            self.clip_threshold = DEFAULT_CLIP[self.variant]
        if not self.clip_threshold > 0:
            raise ValueError("clip threshold must be positive")
        if self.noise_multiplier is not None and self.noise_multiplier < 0:
            raise ValueError("noise multiplier must be non-negative")
        if not 0 < self.subsample_ratio <= 1:
            raise ValueError("subsample ratio must lie in (0, 1]")
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if self.delta is not None and not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.target_epsilon is not None and self.target_epsilon <= 0:
            raise ValueError("target epsilon must be positive")
        if self.noise_multiplier is None and self.target_epsilon is None:
            raise ValueError("give either a noise multiplier or a target epsilon")
        if self.noise_multiplier is not None and self.noise_multiplier > 0 and math.isinf(self.clip_threshold):
            raise ValueError("noise requires a finite clip threshold")

    @staticmethod
    def iterations_for_epochs(epochs: float, subsample_ratio: float) -> int:
        return max(1, int(round(epochs / subsample_ratio)))


@dataclass(frozen=True)
class PrivacySpend:
    epsilon: float
    delta: float
    order: float = float("nan")
    accountant: str = "rdp"


def clip_row(g, C: float) -> np.ndarray:
    """Scale ``g`` by ``min(1, C / ||g||)``; the zero vector is left alone."""
    g = np.asarray(g, dtype=float)
    if not np.all(np.isfinite(g)):
        raise ValueError("cannot clip a non-finite gradient")
    norm = float(np.linalg.norm(g))
    if norm <= C:
        return g.copy()
    return g * (C / norm)


def clip_rows(G, C: float) -> tuple[np.ndarray, np.ndarray]:
    """Clip every row of ``G``; returns clipped rows and their original norms."""
    G = np.asarray(G, dtype=float)
    norms = np.sqrt(np.einsum("ij,ij->i", G, G))
    if not np.all(np.isfinite(norms)):
        raise ValueError("cannot clip a non-finite gradient")
    if math.isinf(C):
        return G, norms
    with np.errstate(divide="ignore"):
        gamma = np.minimum(1.0, C / norms)
    gamma[norms == 0] = 1.0
    return G * gamma[:, None], norms


def gaussian_mechanism(total, C: float, sigma_dp: float, psi) -> np.ndarray:
    """``total + sigma_dp * C * psi`` for a standard-normal ``psi``."""
    total = np.asarray(total, dtype=float)
    if sigma_dp == 0:
        return total.copy()
    return total + (sigma_dp * C) * np.asarray(psi, dtype=float)


def poisson_subsample(n: int, q: float, rng: np.random.Generator) -> np.ndarray:
    """Sorted indices, each of ``range(n)`` kept independently with prob. ``q``.

    Gaps between kept indices are geometric, which is the same law as ``n``
    Bernoulli trials but needs only about ``q n`` draws.
    """
    if not 0 < q <= 1:
        raise ValueError("subsample ratio must lie in (0, 1]")
    if q == 1:
        return np.arange(n)
    chunk = int(q * n + 6 * math.sqrt(q * n + 1) + 16)
    pos = -1
    out = []
    while True:
        idx = pos + np.cumsum(rng.geometric(q, size=chunk))
        out.append(idx[idx < n])
        if idx[-1] >= n:
            break
        pos = int(idx[-1])
    return np.concatenate(out).astype(np.intp)
