"""One-dimensional marginal distributions.

These back the input samplers and the zero-mean kernel constructions,
which need expectations against each marginal (by quadrature for the
continuous families, by exact summation for the empirical one).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri


@dataclass(frozen=True)
class Uniform:
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if not self.high > self.low:
            raise ValueError(f"need low < high, got [{self.low}, {self.high}]")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.low + (self.high - self.low) * rng.random(n)

    def quantile(self, u):
        return self.low + (self.high - self.low) * np.asarray(u, dtype=float)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.clip((x - self.low) / (self.high - self.low), 0.0, 1.0)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.low) & (x <= self.high)
        return np.where(inside, 1.0 / (self.high - self.low), 0.0)

    def quadrature(self, order: int = 64) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and probability weights integrating against this law."""
        t, w = np.polynomial.legendre.leggauss(order)
        nodes = 0.5 * (self.high - self.low) * t + 0.5 * (self.high + self.low)
        return nodes, w / 2.0


@dataclass(frozen=True)
class Normal:
    mean: float = 0.0
    sd: float = 1.0

    def __post_init__(self):
        if not self.sd > 0:
            raise ValueError("standard deviation must be positive")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.mean + self.sd * rng.standard_normal(n)

    def quantile(self, u):
        return self.mean + self.sd * ndtri(np.asarray(u, dtype=float))

    def cdf(self, x):
        return ndtr((np.asarray(x, dtype=float) - self.mean) / self.sd)

    def pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / self.sd
        return np.exp(-0.5 * z * z) / (self.sd * np.sqrt(2.0 * np.pi))

    def quadrature(self, order: int = 64) -> tuple[np.ndarray, np.ndarray]:
        t, w = np.polynomial.hermite.hermgauss(order)
        nodes = self.mean + self.sd * np.sqrt(2.0) * t
        return nodes, w / np.sqrt(np.pi)


@dataclass(frozen=True)
class Empirical:
    """A finite sample treated as a distribution with equal weights."""

    values: tuple[float, ...]

    def __init__(self, values):
        arr = np.sort(np.asarray(values, dtype=float))
        if arr.size == 0:
            raise ValueError("empirical marginal needs at least one value")
        object.__setattr__(self, "values", tuple(arr.tolist()))

    def _arr(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        arr = self._arr()
        return arr[rng.integers(0, arr.size, size=n)]

    def quantile(self, u):
        arr = self._arr()
        u = np.asarray(u, dtype=float)
        idx = np.clip(np.ceil(u * arr.size).astype(int) - 1, 0, arr.size - 1)
        return arr[idx]

    def cdf(self, x):
        arr = self._arr()
        x = np.asarray(x, dtype=float)
        return np.searchsorted(arr, x, side="right") / arr.size

    def pdf(self, x):
        raise NotImplementedError("empirical marginal has no density")

    def quadrature(self, order: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Exact: the expectation is a finite sum over the support."""
        arr = self._arr()
        return arr, np.full(arr.size, 1.0 / arr.size)


MarginalDist = Uniform | Normal | Empirical
