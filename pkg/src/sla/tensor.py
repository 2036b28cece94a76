"""Dense float64 numerics: softmax, feature maps, entropy and a pinned RNG.

Matrices are plain ``numpy.ndarray`` objects of dtype float64.  Every public
function validates finiteness of its inputs, so NaN/Inf never propagate
silently into the attention kernels.
"""

from __future__ import annotations

import math
from enum import Enum

import numpy as np

from .errors import InputError, ParameterError

__all__ = [
    "FeatureMapKind",
    "Rng",
    "as_matrix",
    "entropy",
    "feature_map",
    "feature_map_grad",
    "random_matrix",
    "sigmoid",
    "softmax_rows",
]


class FeatureMapKind(str, Enum):
    IDENTITY = "identity"
    RELU = "relu"
    ONE_PLUS_ELU = "one-plus-elu"
    SILU = "silu"

    @property
    def homogeneous(self) -> bool:
        """True for maps with ``phi(c x) == c phi(x)`` for every ``c > 0``."""
        return self in (FeatureMapKind.IDENTITY, FeatureMapKind.RELU)


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    """Return ``m`` as a finite float64 array, raising InputError otherwise."""
    arr = np.asarray(m, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite values")
    return arr


def sigmoid(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softmax_rows(m, temperature: float = 1.0) -> np.ndarray:
    """Softmax along the last axis with max-subtraction.

    ``temperature`` divides the logits before exponentiation.
    """
    if not temperature > 0 or not math.isfinite(temperature):
        raise ParameterError(f"temperature must be positive and finite, got {temperature}")
    z = as_matrix(m, "softmax input")
    if z.ndim == 0:
        raise InputError("softmax input must have at least one axis")
    if temperature != 1.0:
        z = z / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def feature_map(m, kind: FeatureMapKind | str) -> np.ndarray:
    kind = FeatureMapKind(kind)
    x = as_matrix(m, "feature map input")
    if kind is FeatureMapKind.IDENTITY:
        return x.copy()
    if kind is FeatureMapKind.RELU:
        return np.maximum(x, 0.0)
    if kind is FeatureMapKind.ONE_PLUS_ELU:
        return np.where(x > 0, 1.0 + x, np.exp(np.minimum(x, 0.0)))
    return x * sigmoid(x)


def feature_map_grad(m, kind: FeatureMapKind | str) -> np.ndarray:
    """Elementwise derivative of :func:`feature_map`.

    The relu derivative at exactly 0 is taken as 0; it is undefined there.
    """
    kind = FeatureMapKind(kind)
    x = as_matrix(m, "feature map input")
    if kind is FeatureMapKind.IDENTITY:
        return np.ones_like(x)
    if kind is FeatureMapKind.RELU:
        return (x > 0).astype(np.float64)
    if kind is FeatureMapKind.ONE_PLUS_ELU:
        return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))
    s = sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


def entropy(p) -> float:
    """Shannon entropy in nats, with ``0 ln 0 = 0``."""
    p = as_matrix(p, "probability vector").ravel()
    if p.size == 0:
        raise InputError("probability vector is empty")
    if np.any(p < 0):
        raise InputError("probability vector has negative entries")
    if abs(p.sum() - 1.0) > 1e-9:
        raise InputError(f"probability vector sums to {p.sum()!r}, not 1")
    nz = p[p > 0]
    h = float(-np.sum(nz * np.log(nz)))
    return h if h > 0 else 0.0


# SplitMix64 constants (Steele, Lea & Flood 2014; Vigna's reference C code).
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


class Rng:
    """Counter-based SplitMix64 generator.

    Output ``i`` (0-based) is ``mix(seed + (i + 1) * 0x9E3779B97F4A7C15 mod 2**64)``,
    which is bit-identical to the sequential SplitMix64 reference seeded with
    ``seed``.  Doubles are ``(u64 >> 11) * 2**-53`` in ``[0, 1)``.  Being
    counter-based, blocks of draws are produced vectorized.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self.counter = 0

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, counter={self.counter})"

    def next_u64(self, n: int) -> np.ndarray:
        if n < 0:
            raise ParameterError("draw count must be non-negative")
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        z = np.uint64(self.seed) + idx * _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))

    def random(self, n: int) -> np.ndarray:
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * (2.0**-53)

    def uniform(self, shape, scale: float = 1.0) -> np.ndarray:
        """I.i.d. draws in ``[-scale, scale]`` filled in row-major order."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        u = self.random(int(np.prod(shape, dtype=np.int64)))
        return (scale * (2.0 * u - 1.0)).reshape(shape)

    def integers(self, high: int) -> int:
        """One integer in ``[0, high)``."""
        if high < 1:
            raise ParameterError("high must be >= 1")
        return min(int(self.random(1)[0] * high), high - 1)

    def unit_vector(self, dim: int) -> np.ndarray:
        while True:
            v = self.uniform(dim)
            norm = np.linalg.norm(v)
            if norm > 1e-3:
                return v / norm


def random_matrix(rng: Rng, rows: int, cols: int, scale: float = 1.0) -> np.ndarray:
    if rows < 1 or cols < 1:
        raise ParameterError(f"matrix shape must be positive, got {rows}x{cols}")
    return rng.uniform((rows, cols), scale)
