"""Laplace noise primitives with seeded and secure sampling modes.

The sampler is a plain inverse-CDF transform of one uniform draw per sample,
kept deliberately simple so that an auditor can reason about it.  Release-mode
sources additionally snap every draw (clamp, then round to a fixed resolution)
to blunt the known floating-point attacks on naive Laplace samplers.
"""

from __future__ import annotations

import hashlib
import math
import secrets
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PrivacyBudget",
    "Snapping",
    "RELEASE_SNAPPING",
    "NoiseSource",
    "sample_laplace",
    "laplace_tail",
    "noisy_count",
]

# Smallest positive normal double; guards the measure-zero u = 0 draw in the
# inverse-CDF transform without changing the distribution detectably.
_TINY = float(np.finfo(np.float64).tiny)


@dataclass(frozen=True, order=True)
class PrivacyBudget:
    """An (epsilon, delta) privacy-loss pair.

    epsilon is allowed to be 0 so that accounting code can express the empty
    guarantee (0, 0); mechanisms that actually spend budget require
    epsilon > 0 and raise if given less.
    """

    epsilon: float
    delta: float = 0.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.epsilon) or self.epsilon < 0.0:
            raise ValueError(f"epsilon must be finite and >= 0, got {self.epsilon}")
        if not (0.0 <= self.delta < 1.0):
            raise ValueError(f"delta must lie in [0, 1), got {self.delta}")

    def __add__(self, other: "PrivacyBudget") -> "PrivacyBudget":
        """Sequential composition: budgets add coordinate-wise."""
        if not isinstance(other, PrivacyBudget):
            return NotImplemented
        return PrivacyBudget(self.epsilon + other.epsilon, self.delta + other.delta)


@dataclass(frozen=True)
class Snapping:
    """Clamp-and-round post-processing applied to every noise draw.

    Outputs are clipped to [-clamp, clamp] and rounded to the nearest integer
    multiple of ``resolution``.  With a power-of-two resolution the result is
    an exact multiple and the operation is idempotent.
    """

    resolution: float = 2.0 ** -20
    clamp: float = 2.0 ** 40

    def __post_init__(self) -> None:
        if not math.isfinite(self.resolution) or self.resolution <= 0.0:
            raise ValueError(f"resolution must be finite and > 0, got {self.resolution}")
        if not math.isfinite(self.clamp) or self.clamp <= 0.0:
            raise ValueError(f"clamp must be finite and > 0, got {self.clamp}")

    def apply(self, x):
        if isinstance(x, float):
            y = min(max(x, -self.clamp), self.clamp)
            # round() is half-to-even, matching np.rint on the vector path
            return round(y / self.resolution) * self.resolution
        y = np.clip(x, -self.clamp, self.clamp)
        return np.rint(y / self.resolution) * self.resolution


#: Snapping configuration used for release-mode noise sources.
RELEASE_SNAPPING = Snapping()


def _derive_seed(seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{seed}/{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:16], "big")


class NoiseSource:
    """Source of uniform randomness for the noise primitives.

    Two modes:

    * ``seeded-test`` -- constructed from an explicit integer seed; the draw
      sequence is reproducible and substreams derive deterministically from
      stable text labels, so a fixed-seed run produces the same outputs no
      matter how work is scheduled across tasks.
    * ``secure-release`` -- seeded from OS entropy; the seed and generator
      state are never exposed, persisted, or picklable.

    A single NoiseSource must not be shared across concurrent tasks; give
    each task its own ``substream(label)``.
    """

    def __init__(self, seed: int | None = None, snapping: Snapping | None = None):
        self._seed = int(seed) if seed is not None else None
        entropy = self._seed if self._seed is not None else secrets.randbits(128)
        self._rng = np.random.default_rng(entropy)
        self.snapping = snapping

    @classmethod
    def seeded(cls, seed: int, snapping: Snapping | None = None) -> "NoiseSource":
        """Reproducible source for tests and seeded dry runs."""
        return cls(seed=seed, snapping=snapping)

    @classmethod
    def secure(cls, snapping: Snapping | None = RELEASE_SNAPPING) -> "NoiseSource":
        """OS-entropy source for real releases; snapping on by default."""
        return cls(seed=None, snapping=snapping)

    @property
    def mode(self) -> str:
        return "seeded-test" if self._seed is not None else "secure-release"

    def substream(self, label: str) -> "NoiseSource":
        """Derive an independent child stream keyed by a stable label."""
        if self._seed is not None:
            return NoiseSource(_derive_seed(self._seed, label), self.snapping)
        return NoiseSource(None, self.snapping)

    def uniform(self, size: int | None = None):
        """Uniform draws in [0, 1); scalar float if size is None."""
        return self._rng.random(size)

    def __repr__(self) -> str:
        if self._seed is None:
            return "NoiseSource(mode='secure-release')"
        return f"NoiseSource(seed={self._seed}, snapping={self.snapping!r})"

    def __getstate__(self):
        if self._seed is None:
            raise TypeError("a secure-release NoiseSource does not expose its state")
        return {"seed": self._seed, "snapping": self.snapping}

    def __setstate__(self, state):
        self.__init__(state["seed"], state["snapping"])


def sample_laplace(scale: float, rng: NoiseSource, size: int | None = None):
    """Draw from the zero-mean Laplace distribution with the given scale.

    One uniform u ~ U[0,1) is consumed per sample and transformed through the
    inverse CDF: with v = 2u - 1, the draw is -scale * sign(v) * ln(1 - |v|).
    If the source is snapping, each draw is clamped and rounded afterwards.

    Returns a float when size is None, else an ndarray of length ``size``.
    """
    if not (scale > 0.0) or not math.isfinite(scale):
        raise ValueError(f"scale must be finite and > 0, got {scale}")
    if size is None:
        # scalar fast path: same uniform stream as the vector path (values may
        # differ from it by 1 ulp via math.log vs np.log)
        v = 2.0 * float(rng.uniform()) - 1.0
        t = 1.0 - abs(v)
        if t < _TINY:
            t = _TINY
        x = -scale * math.copysign(1.0, v) * math.log(t)
        if rng.snapping is not None:
            x = rng.snapping.apply(x)
        return x
    u = rng.uniform(size)
    v = 2.0 * u - 1.0
    t = np.maximum(1.0 - np.abs(v), _TINY)
    x = -scale * np.sign(v) * np.log(t)
    if rng.snapping is not None:
        x = rng.snapping.apply(x)
    return x


def laplace_tail(scale: float, threshold: float) -> float:
    """Exact upper-tail probability P(Lap(scale) >= threshold) for threshold >= 0.

    Equal to (1/2) * exp(-threshold / scale) from the Laplace CDF.
    """
    if not (scale > 0.0) or not math.isfinite(scale):
        raise ValueError(f"scale must be finite and > 0, got {scale}")
    if threshold < 0.0 or not math.isfinite(threshold):
        raise ValueError(f"threshold must be finite and >= 0, got {threshold}")
    return 0.5 * math.exp(-threshold / scale)


def noisy_count(
    true_count: int,
    epsilon: float,
    rng: NoiseSource,
    *,
    sensitivity: float = 1.0,
) -> float:
    """Laplace mechanism for a counting query: true_count + Lap(sensitivity/epsilon).

    Counting queries have global sensitivity 1, the default.
    """
    if true_count < 0:
        raise ValueError(f"true_count must be >= 0, got {true_count}")
    if not (epsilon > 0.0) or not math.isfinite(epsilon):
        raise ValueError(f"epsilon must be finite and > 0, got {epsilon}")
    if not (sensitivity > 0.0) or not math.isfinite(sensitivity):
        raise ValueError(f"sensitivity must be finite and > 0, got {sensitivity}")
    return true_count + sample_laplace(sensitivity / epsilon, rng)
