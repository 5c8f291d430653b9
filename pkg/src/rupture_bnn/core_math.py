"""Numerical primitives shared by the model, data and analysis code.

Everything here is a pure function of its arguments except `RandomSource`,
which is a seeded, splittable stream of random numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LIKELIHOOD_EPS = 1e-7
# sigmoid output is kept strictly inside (0, 1) even where float64 rounds
_SIGMOID_LO = np.nextafter(0.0, 1.0)
_SIGMOID_HI = np.nextafter(1.0, 0.0)


class DimensionError(ValueError):
    """Raised when array shapes that must agree do not."""


def _check_finite(x):
    if np.any(np.isnan(x)):
        raise ValueError("NaN input")


def relu(x):
    x = np.asarray(x, dtype=float)
    _check_finite(x)
    return np.maximum(x, 0.0)


def sigmoid(x):
    """Logistic function, evaluated without overflow for any finite input.

    The result is clipped to the open interval (0, 1): the smallest
    subnormal below and the largest double under 1 above.
    """
    x = np.asarray(x, dtype=float)
    _check_finite(x)
    # exp of a non-positive number never overflows
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return np.clip(out, _SIGMOID_LO, _SIGMOID_HI)


def softplus(x):
    """log(1 + exp(x)), floored at the smallest positive double."""
    x = np.asarray(x, dtype=float)
    _check_finite(x)
    return np.maximum(np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x))), _SIGMOID_LO)


def inverse_softplus(y):
    """Inverse of `softplus`; defined for y > 0."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("inverse_softplus needs strictly positive input")
    # log(exp(y) - 1) = y + log(1 - exp(-y))
    return y + np.log(-np.expm1(-y))


def softplus_grad(x):
    """d softplus / dx, which is the logistic function."""
    return sigmoid(x)


@dataclass(frozen=True)
class DiagonalGaussian:
    """Product of independent normals, one per coordinate."""

    mean: np.ndarray
    stddev: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        stddev = np.atleast_1d(np.asarray(self.stddev, dtype=float))
        if mean.shape != stddev.shape:
            raise DimensionError(
                f"mean shape {mean.shape} != stddev shape {stddev.shape}")
        if not np.all(stddev > 0):
            raise ValueError("stddev must be strictly positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "stddev", stddev)

    @classmethod
    def standard(cls, dim: int) -> "DiagonalGaussian":
        return cls(np.zeros(dim), np.ones(dim))

    @property
    def dim(self) -> int:
        return self.mean.size

    def log_density(self, x):
        """Log pdf at each row of `x` (last axis indexes coordinates)."""
        z = (np.asarray(x, dtype=float) - self.mean) / self.stddev
        return np.sum(-0.5 * z**2 - np.log(self.stddev)
                      - 0.5 * np.log(2 * np.pi), axis=-1)


def kl_diag_gaussian(q: DiagonalGaussian, p: DiagonalGaussian) -> float:
    """KL(q || p) for two diagonal Gaussians, in closed form."""
    if q.mean.shape != p.mean.shape:
        raise DimensionError(
            f"cannot compare {q.mean.shape} with {p.mean.shape}")
    var_ratio = (q.stddev / p.stddev) ** 2
    mahal = ((q.mean - p.mean) / p.stddev) ** 2
    return float(np.sum(np.log(p.stddev / q.stddev)
                        + 0.5 * (var_ratio + mahal) - 0.5))


def sample_reparameterized(g: DiagonalGaussian, eps) -> np.ndarray:
    """Map standard-normal noise `eps` onto a draw from `g`.

    `eps` may carry leading batch axes; its trailing axis must match `g`.
    """
    eps = np.asarray(eps, dtype=float)
    if eps.shape[-1:] != g.mean.shape:
        raise DimensionError(
            f"noise trailing shape {eps.shape[-1:]} != {g.mean.shape}")
    return g.mean + g.stddev * eps


def bernoulli_log_likelihood(y, p):
    """Log probability of binary outcome `y` under success probability `p`.

    `p` is clamped to [1e-7, 1 - 1e-7] so the result is always finite.
    """
    y = np.asarray(y, dtype=float)
    p = np.clip(np.asarray(p, dtype=float), LIKELIHOOD_EPS, 1.0 - LIKELIHOOD_EPS)
    return y * np.log(p) + (1.0 - y) * np.log1p(-p)


@dataclass(frozen=True)
class RandomSource:
    """Deterministic, splittable random stream.

    A source is identified by its root `seed` and a `stream` path of
    non-negative integers. Child streams append one index to the path;
    numpy's `SeedSequence` hashes (seed, path) into the generator state,
    so distinct paths give independent, non-colliding streams. Each
    instance owns one generator and must not be shared between threads;
    derive children instead.
    """

    seed: int
    stream: tuple = ()
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        stream = tuple(int(s) for s in self.stream)
        if any(not 0 <= s < 2**64 for s in stream):
            raise ValueError("stream ids must be 64-bit unsigned integers")
        object.__setattr__(self, "stream", stream)
        seq = np.random.SeedSequence(int(self.seed), spawn_key=stream)
        object.__setattr__(self, "_gen", np.random.Generator(np.random.PCG64(seq)))

    def child(self, stream_id: int) -> "RandomSource":
        """Fresh independent source; does not advance this one."""
        return RandomSource(self.seed, self.stream + (int(stream_id),))

    def normal(self, size=None) -> np.ndarray:
        return self._gen.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, low, high=None, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size)
