"""Input samplers and reproducible random substreams.

Every randomized operation derives its own generator from the run seed
plus a path of labels, so replicates can run in any order (or in
parallel) and still produce identical numbers.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import CapabilityError, DomainError, NotPsdError
from .marginals import MarginalDist


def substream(seed: int, *path) -> np.random.Generator:
    """Counter-based generator for a (seed, label...) path.

    Labels may be ints or strings; strings are hashed with crc32 so the
    derivation is stable across processes and platforms.
    """
    keys = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for p in path:
        if isinstance(p, str):
            keys.append(zlib.crc32(p.encode("utf8")))
        else:
            keys.append(int(p) & 0xFFFFFFFFFFFFFFFF)
    seq = np.random.SeedSequence(keys)
    return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class IndependentMarginals:
    """Product law over independent 1-d marginals."""

    marginals: tuple

    def __init__(self, marginals):
        object.__setattr__(self, "marginals", tuple(marginals))
        if not self.marginals:
            raise DomainError("need at least one marginal")

    @property
    def d(self) -> int:
        return len(self.marginals)

    @property
    def independent(self) -> bool:
        return True

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        cols = [m.sample(n, rng) for m in self.marginals]
        return np.column_stack(cols)

    def conditional_sample(
        self,
        fixed_idx: tuple[int, ...],
        fixed_values: np.ndarray,
        n: int,
        rng: np.random.Generator,
    ) -> np.ndarray:
        """Sample the full vector with the given coordinates held fixed."""
        fixed_values = np.asarray(fixed_values, dtype=float)
        out = np.empty((n, self.d))
        for l in range(self.d):
            if l in fixed_idx:
                out[:, l] = fixed_values[fixed_idx.index(l)]
            else:
                out[:, l] = self.marginals[l].sample(n, rng)
        return out


@dataclass(frozen=True)
class GaussianCopula:
    """Dependent inputs: Gaussian copula over given marginals."""

    marginals: tuple
    corr: np.ndarray

    def __init__(self, marginals, corr):
        object.__setattr__(self, "marginals", tuple(marginals))
        corr = np.asarray(corr, dtype=float)
        d = len(self.marginals)
        if corr.shape != (d, d):
            raise DomainError(f"correlation matrix must be {d}x{d}")
        if not np.allclose(corr, corr.T, atol=1e-12):
            raise NotPsdError("correlation matrix must be symmetric")
        if not np.allclose(np.diag(corr), 1.0, atol=1e-12):
            raise NotPsdError("correlation matrix must have unit diagonal")
        try:
            chol = np.linalg.cholesky(corr)
        except np.linalg.LinAlgError as e:
            raise NotPsdError("correlation matrix is not positive definite") from e
        object.__setattr__(self, "corr", corr)
        object.__setattr__(self, "_chol", chol)

    @property
    def d(self) -> int:
        return len(self.marginals)

    @property
    def independent(self) -> bool:
        return bool(np.allclose(self.corr, np.eye(self.d), atol=0.0))

    def _latent_to_x(self, z: np.ndarray) -> np.ndarray:
        u = ndtr(z)
        # keep quantiles finite for the unbounded marginals
        u = np.clip(u, 1e-15, 1.0 - 1e-15)
        out = np.empty_like(z)
        for l, marg in enumerate(self.marginals):
            out[:, l] = marg.quantile(u[:, l])
        return out

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal((n, self.d)) @ self._chol.T
        return self._latent_to_x(z)

    def conditional_sample(
        self,
        fixed_idx: tuple[int, ...],
        fixed_values: np.ndarray,
        n: int,
        rng: np.random.Generator,
    ) -> np.ndarray:
        """Gaussian conditioning in latent space, then marginal quantiles."""
        fixed_idx = tuple(fixed_idx)
        fixed_values = np.atleast_1d(np.asarray(fixed_values, dtype=float))
        if len(fixed_idx) != fixed_values.size:
            raise DomainError("one fixed value per fixed index required")
        free_idx = [l for l in range(self.d) if l not in fixed_idx]
        z_fixed = np.array(
            [
                ndtri(np.clip(self.marginals[l].cdf(v), 1e-15, 1.0 - 1e-15))
                for l, v in zip(fixed_idx, fixed_values)
            ]
        )
        out = np.empty((n, self.d))
        for j, l in enumerate(fixed_idx):
            out[:, l] = fixed_values[j]
        if not free_idx:
            return out
        saa = self.corr[np.ix_(fixed_idx, fixed_idx)]
        sba = self.corr[np.ix_(free_idx, fixed_idx)]
        sbb = self.corr[np.ix_(free_idx, free_idx)]
        if fixed_idx:
            solve = np.linalg.solve(saa, z_fixed)
            mean = sba @ solve
            cov = sbb - sba @ np.linalg.solve(saa, sba.T)
        else:
            mean = np.zeros(len(free_idx))
            cov = sbb
        # guard tiny negative eigenvalues from finite arithmetic
        w, v = np.linalg.eigh(cov)
        w = np.clip(w, 0.0, None)
        root = v @ np.diag(np.sqrt(w))
        z_free = mean[None, :] + rng.standard_normal((n, len(free_idx))) @ root.T
        u = np.clip(ndtr(z_free), 1e-15, 1.0 - 1e-15)
        for j, l in enumerate(free_idx):
            out[:, l] = self.marginals[l].quantile(u[:, j])
        return out


InputSampler = IndependentMarginals | GaussianCopula


def require_independent(sampler: InputSampler, operation: str):
    if not sampler.independent:
        raise CapabilityError(
            f"{operation} assumes independent inputs; got a dependent sampler. "
            "Use the double-loop or nearest-neighbour estimators instead."
        )
