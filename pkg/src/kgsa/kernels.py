"""Kernels on inputs and on structured outputs.

Scalar input kernels come in plain (Linear, Gaussian) and zero-mean
flavours.  Zero-mean here means the integral of k(x, .) against a given
input marginal vanishes for every x, which is what makes the product
construction ``prod_l (1 + k_l)`` decompose additively over subsets of
inputs.  Three constructions are provided:

* a Sobolev kernel on [0, 1] built from Bernoulli polynomials, zero-mean
  under Uniform(0, 1) by construction;
* projection of an arbitrary base kernel onto the zero-mean subspace of
  a given marginal (one-dimensional quadrature, exact for empirical
  marginals);
* a Stein construction that only needs the score of the target density.

Output kernels cover scalars, categorical levels (Dirac), distributions
represented by samples (exponentiated squared MMD or squared Wasserstein
distance), and time series (a normalized global alignment kernel).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence, Union

import numpy as np

from .data import Categorical, Curve, DistSample, OutputColumn, Scalar, column_kind, scalar_values
from .errors import (
    CapabilityError,
    DegenerateKernelError,
    DomainError,
    InfeasibleAlignmentError,
    VariantMismatchError,
)
from .marginals import MarginalDist

try:
    from numba import njit, prange

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        if args and callable(args[0]):
            return args[0]
        return wrap

    prange = range


# --------------------------------------------------------------------------
# Bernoulli polynomials (exact rational coefficients, degree <= 6)
# --------------------------------------------------------------------------

_BERNOULLI_COEFFS = {
    0: (1.0,),
    1: (1.0, -1.0 / 2.0),
    2: (1.0, -1.0, 1.0 / 6.0),
    3: (1.0, -3.0 / 2.0, 1.0 / 2.0, 0.0),
    4: (1.0, -2.0, 1.0, 0.0, -1.0 / 30.0),
    5: (1.0, -5.0 / 2.0, 5.0 / 3.0, 0.0, -1.0 / 6.0, 0.0),
    6: (1.0, -3.0, 5.0 / 2.0, 0.0, -1.0 / 2.0, 0.0, 1.0 / 42.0),
}


def bernoulli_polynomial(degree: int, x):
    """Evaluate the Bernoulli polynomial of the given degree (<= 6)."""
    if degree not in _BERNOULLI_COEFFS:
        raise DomainError(f"Bernoulli polynomial degree {degree} not tabulated (max 6)")
    return np.polyval(_BERNOULLI_COEFFS[degree], np.asarray(x, dtype=float))


# --------------------------------------------------------------------------
# Kernel specifications
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Linear:
    """k(x, y) = x * y on scalars."""


@dataclass(frozen=True)
class Gaussian:
    """k(x, y) = exp(-(x - y)^2 / (2 sigma^2)) on scalars."""

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise DegenerateKernelError(f"gaussian bandwidth must be positive, got {self.sigma}")


@dataclass(frozen=True)
class Dirac:
    """Equality kernel on categorical levels {0, ..., num_levels-1}."""

    num_levels: int

    def __post_init__(self):
        if self.num_levels < 2:
            raise DegenerateKernelError("dirac kernel needs at least two levels")


@dataclass(frozen=True)
class SobolevZeroMean:
    """Reproducing kernel of the Sobolev space of order r on [0, 1].

    Zero-mean under Uniform(0, 1).  Only orders 1..3 are supported; the
    Bernoulli coefficients above stop at degree six.
    """

    r: int = 1

    def __post_init__(self):
        if self.r not in (1, 2, 3):
            raise DomainError(f"sobolev order must be 1, 2 or 3, got {self.r}")


@dataclass(frozen=True)
class DurrandeZeroMean:
    """Base kernel projected onto the zero-mean subspace of a marginal.

    k0(x, y) = k(x, y) - m(x) m(y) / M with m(x) the mean embedding of
    the marginal under k and M its double integral.  Quadrature order
    only matters for the continuous marginals; empirical marginals sum
    exactly over their support.
    """

    base: "KernelSpec"
    marginal: MarginalDist
    order: int = 64


def standard_normal_score(x):
    """Score function of the standard normal density."""
    return -np.asarray(x, dtype=float)


@dataclass(frozen=True)
class SteinZeroMean:
    """Stein construction: zero-mean under the density whose score is given.

    Closed-form derivatives are implemented for Linear and Gaussian
    bases.  The score defaults to the standard normal one.
    """

    base: "KernelSpec"
    score: Callable = standard_normal_score


@dataclass(frozen=True)
class ProductZeroMean:
    """prod_l (1 + k_l(x_l, y_l)) over per-input zero-mean kernels."""

    factors: tuple

    def __init__(self, factors):
        object.__setattr__(self, "factors", tuple(factors))
        if not self.factors:
            raise DegenerateKernelError("product kernel needs at least one factor")


@dataclass(frozen=True)
class DistributionEmbedding:
    """k(P, Q) = sigma2 * exp(-lam * MMD^2(P, Q)) on sampled distributions."""

    sigma2: float = 1.0
    lam: float = 1.0
    inner: "KernelSpec" = field(default_factory=lambda: Gaussian(1.0))

    def __post_init__(self):
        if not self.sigma2 > 0 or not self.lam > 0:
            raise DegenerateKernelError("sigma2 and lam must be positive")
        if not isinstance(self.inner, (Linear, Gaussian)):
            raise CapabilityError("distribution embedding needs a scalar inner kernel")


@dataclass(frozen=True)
class WassersteinEmbedding:
    """k(P, Q) = sigma2 * exp(-lam * W2^2(P, Q)), exact 1-d quantile coupling."""

    sigma2: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        if not self.sigma2 > 0 or not self.lam > 0:
            raise DegenerateKernelError("sigma2 and lam must be positive")


@dataclass(frozen=True)
class GlobalAlignment:
    """Normalized global alignment kernel on curves.

    Sums a Gaussian local similarity over all monotone alignments in
    log space.  The local kernel is divided by (2 - itself), which keeps
    the alignment sum positive semi-definite; the result is then
    normalized so k(a, a) = 1.  An optional band constrains alignments
    to |i - j| <= band.
    """

    bandwidth: float
    band: int | None = None

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise DegenerateKernelError("alignment bandwidth must be positive")
        if self.band is not None and self.band < 0:
            raise DomainError("alignment band must be non-negative")


KernelSpec = Union[
    Linear,
    Gaussian,
    Dirac,
    SobolevZeroMean,
    DurrandeZeroMean,
    SteinZeroMean,
    ProductZeroMean,
    DistributionEmbedding,
    WassersteinEmbedding,
    GlobalAlignment,
]

_SCALAR_SPECS = (Linear, Gaussian, SobolevZeroMean, DurrandeZeroMean, SteinZeroMean)


# --------------------------------------------------------------------------
# Scalar kernels, vectorized
# --------------------------------------------------------------------------


def sobolev_kernel(x, y, r: int = 1):
    """Sobolev kernel of order r on [0, 1]; broadcasts over arrays."""
    if r not in (1, 2, 3):
        raise DomainError(f"sobolev order must be 1, 2 or 3, got {r}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    for name, arr in (("x", x), ("y", y)):
        bad = (arr < 0.0) | (arr > 1.0)
        if np.any(bad):
            offending = np.asarray(arr)[bad].flat[0]
            raise DomainError(f"sobolev kernel argument {name}={offending} outside [0, 1]")
    sign = (-1.0) ** (r + 1)
    out = bernoulli_polynomial(2 * r, np.abs(x - y)) / (sign * math.factorial(2 * r))
    for j in range(1, r + 1):
        out = out + bernoulli_polynomial(j, x) * bernoulli_polynomial(j, y) / math.factorial(j) ** 2
    return out


def _gaussian_k(sigma, x, y):
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return np.exp(-(d * d) / (2.0 * sigma * sigma))


@lru_cache(maxsize=None)
def _durrande_parts(spec: DurrandeZeroMean):
    """Quadrature nodes/weights, mean-embedding values and double integral."""
    nodes, weights = spec.marginal.quadrature(spec.order)
    kmat = _scalar_eval(spec.base, nodes[:, None], nodes[None, :])
    m_nodes = kmat @ weights
    big_m = float(weights @ m_nodes)
    if big_m <= 0:
        raise DegenerateKernelError(
            "zero-mean projection undefined: double integral of base kernel is not positive"
        )
    diag0 = np.diag(kmat) - m_nodes * m_nodes / big_m
    scale = max(1.0, float(np.max(np.abs(np.diag(kmat)))))
    if float(np.max(np.abs(diag0))) <= 1e-10 * scale:
        raise DegenerateKernelError(
            "zero-mean projection degenerates to the zero kernel for this base/marginal pair"
        )
    return nodes, weights, big_m


def durrande_zero_mean(base: KernelSpec, marginal: MarginalDist, x, y, order: int = 64):
    """Evaluate the projected kernel k0(x, y); broadcasts over arrays."""
    return _scalar_eval(DurrandeZeroMean(base, marginal, order), x, y)


def _durrande_mean_embedding(spec: DurrandeZeroMean, x):
    nodes, weights, _ = _durrande_parts(spec)
    kvals = _scalar_eval(spec.base, np.asarray(x, dtype=float)[..., None], nodes)
    return kvals @ weights


def stein_zero_mean(base: KernelSpec, score: Callable, x, y):
    """Evaluate the Stein zero-mean kernel; broadcasts over arrays."""
    return _scalar_eval(SteinZeroMean(base, score), x, y)


def _stein_eval(spec: SteinZeroMean, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sx = np.asarray(spec.score(x), dtype=float)
    sy = np.asarray(spec.score(y), dtype=float)
    if isinstance(spec.base, Linear):
        return 1.0 + sx * x + sy * y + sx * sy * (x * y)
    if isinstance(spec.base, Gaussian):
        s2 = spec.base.sigma**2
        d = x - y
        k = np.exp(-(d * d) / (2.0 * s2))
        return k * (1.0 / s2 - (d * d) / s2**2 + (sx - sy) * d / s2 + sx * sy)
    raise CapabilityError(
        f"stein construction has no closed-form derivatives for base {type(spec.base).__name__}"
    )


def _scalar_eval(spec: KernelSpec, x, y):
    """Vectorized kernel evaluation on real arrays (scalar input kernels)."""
    if isinstance(spec, Linear):
        return np.asarray(x, dtype=float) * np.asarray(y, dtype=float)
    if isinstance(spec, Gaussian):
        return _gaussian_k(spec.sigma, x, y)
    if isinstance(spec, SobolevZeroMean):
        return sobolev_kernel(x, y, spec.r)
    if isinstance(spec, DurrandeZeroMean):
        _, _, big_m = _durrande_parts(spec)
        base = _scalar_eval(spec.base, x, y)
        mx = _durrande_mean_embedding(spec, x)
        my = _durrande_mean_embedding(spec, y)
        return base - mx * my / big_m
    if isinstance(spec, SteinZeroMean):
        return _stein_eval(spec, x, y)
    raise VariantMismatchError(type(spec).__name__, "Scalar")


# --------------------------------------------------------------------------
# Squared Wasserstein distance between 1-d samples (quantile coupling)
# --------------------------------------------------------------------------


def w2_squared(p: np.ndarray, q: np.ndarray) -> float:
    """Exact squared 2-Wasserstein distance between empirical measures."""
    p = np.sort(np.asarray(p, dtype=float))
    q = np.sort(np.asarray(q, dtype=float))
    if p.size == q.size:
        d = p - q
        return float(np.mean(d * d))
    cuts = np.union1d(np.arange(1, p.size) / p.size, np.arange(1, q.size) / q.size)
    edges = np.concatenate(([0.0], cuts, [1.0]))
    mids = 0.5 * (edges[:-1] + edges[1:])
    seg = np.diff(edges)
    pi = np.minimum((mids * p.size).astype(int), p.size - 1)
    qi = np.minimum((mids * q.size).astype(int), q.size - 1)
    d = p[pi] - q[qi]
    return float(np.sum(seg * d * d))


# --------------------------------------------------------------------------
# Global alignment kernel
# --------------------------------------------------------------------------


@njit(cache=True)
def _gak_log_raw(a, la, b, lb, inv2s2, band):  # pragma: no cover - jitted
    prev = np.full(lb + 1, -np.inf)
    cur = np.full(lb + 1, -np.inf)
    prev[0] = 0.0
    for i in range(1, la + 1):
        cur[:] = -np.inf
        jlo = 1
        jhi = lb
        if band >= 0:
            if i - band > jlo:
                jlo = i - band
            if i + band < jhi:
                jhi = i + band
        for j in range(jlo, jhi + 1):
            d = a[i - 1] - b[j - 1]
            ll = -d * d * inv2s2
            ll = ll - np.log(2.0 - np.exp(ll))
            x = prev[j]
            y = cur[j - 1]
            z = prev[j - 1]
            m = x
            if y > m:
                m = y
            if z > m:
                m = z
            if m == -np.inf:
                continue
            cur[j] = ll + m + np.log(np.exp(x - m) + np.exp(y - m) + np.exp(z - m))
        prev, cur = cur, prev
    return prev[lb]


if _HAVE_NUMBA:

    @njit(cache=True, parallel=True)
    def _gak_log_gram_jit(values, lengths, inv2s2, band):  # pragma: no cover - jitted
        n = values.shape[0]
        selfs = np.empty(n)
        for i in prange(n):
            selfs[i] = _gak_log_raw(values[i], lengths[i], values[i], lengths[i], inv2s2, band)
        out = np.empty((n, n))
        for i in prange(n):
            out[i, i] = 1.0
            for j in range(i + 1, n):
                lk = _gak_log_raw(values[i], lengths[i], values[j], lengths[j], inv2s2, band)
                k = np.exp(lk - 0.5 * selfs[i] - 0.5 * selfs[j])
                out[i, j] = k
                out[j, i] = k
        return out


def _check_band(spec: GlobalAlignment, la: int, lb: int):
    if spec.band is not None and spec.band < abs(la - lb):
        raise InfeasibleAlignmentError(
            f"band {spec.band} cannot align lengths {la} and {lb}; "
            f"need band >= {abs(la - lb)}"
        )


def global_alignment_kernel(a: Curve, b: Curve, bandwidth: float, band: int | None = None) -> float:
    """Normalized alignment kernel between two curves, in (0, 1]."""
    return eval_kernel(GlobalAlignment(bandwidth, band), a, b)


def _gak_eval(spec: GlobalAlignment, va: np.ndarray, vb: np.ndarray) -> float:
    _check_band(spec, va.size, vb.size)
    inv2s2 = 1.0 / (2.0 * spec.bandwidth**2)
    bnd = -1 if spec.band is None else int(spec.band)
    laa = _gak_log_raw(va, va.size, va, va.size, inv2s2, bnd)
    lbb = _gak_log_raw(vb, vb.size, vb, vb.size, inv2s2, bnd)
    lab = _gak_log_raw(va, va.size, vb, vb.size, inv2s2, bnd)
    return float(np.exp(lab - 0.5 * laa - 0.5 * lbb))


def _gak_gram(spec: GlobalAlignment, curves: Sequence[np.ndarray]) -> np.ndarray:
    lengths = np.array([c.size for c in curves], dtype=np.int64)
    for i in range(len(curves)):
        for j in range(i + 1, len(curves)):
            _check_band(spec, lengths[i], lengths[j])
    lmax = int(lengths.max())
    values = np.zeros((len(curves), lmax))
    for i, c in enumerate(curves):
        values[i, : c.size] = c
    inv2s2 = 1.0 / (2.0 * spec.bandwidth**2)
    bnd = -1 if spec.band is None else int(spec.band)
    if _HAVE_NUMBA:
        return _gak_log_gram_jit(values, lengths, inv2s2, bnd)
    n = len(curves)
    selfs = np.array(
        [_gak_log_raw(values[i], lengths[i], values[i], lengths[i], inv2s2, bnd) for i in range(n)]
    )
    out = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            lk = _gak_log_raw(values[i], lengths[i], values[j], lengths[j], inv2s2, bnd)
            out[i, j] = out[j, i] = np.exp(lk - 0.5 * selfs[i] - 0.5 * selfs[j])
    return out


# --------------------------------------------------------------------------
# eval_kernel / gram on output columns
# --------------------------------------------------------------------------

_ACCEPTED_VARIANT = {
    Linear: "Scalar",
    Gaussian: "Scalar",
    SobolevZeroMean: "Scalar",
    DurrandeZeroMean: "Scalar",
    SteinZeroMean: "Scalar",
    Dirac: "Categorical",
    DistributionEmbedding: "DistSample",
    WassersteinEmbedding: "DistSample",
    GlobalAlignment: "Curve",
}


def _unwrap(spec: KernelSpec, v):
    """Extract the raw payload of an output value, checking the variant."""
    want = _ACCEPTED_VARIANT[type(spec)]
    if isinstance(v, Scalar):
        got = "Scalar"
        payload = v.value
    elif isinstance(v, Categorical):
        got = "Categorical"
        payload = v.level
    elif isinstance(v, Curve):
        got = "Curve"
        payload = v.values
    elif isinstance(v, DistSample):
        got = "DistSample"
        payload = v.values
    elif isinstance(v, (int, float, np.integer, np.floating)):
        got = "Categorical" if want == "Categorical" else "Scalar"
        payload = v
    elif isinstance(v, np.ndarray):
        got = want if want in ("Curve", "DistSample") else "Scalar"
        payload = v
    else:
        got = type(v).__name__
        payload = v
    if got != want:
        raise VariantMismatchError(type(spec).__name__, got)
    return payload


def eval_kernel(spec: KernelSpec, a, b) -> float:
    """Kernel value between two output values (or raw payloads)."""
    if isinstance(spec, ProductZeroMean):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if a.shape != (len(spec.factors),) or b.shape != (len(spec.factors),):
            raise DomainError(
                f"product kernel expects vectors of length {len(spec.factors)}"
            )
        out = 1.0
        for l, f in enumerate(spec.factors):
            out *= 1.0 + float(_scalar_eval(f, a[l], b[l]))
        return out
    pa = _unwrap(spec, a)
    pb = _unwrap(spec, b)
    if isinstance(spec, _SCALAR_SPECS):
        return float(_scalar_eval(spec, pa, pb))
    if isinstance(spec, Dirac):
        for lev in (pa, pb):
            if not 0 <= int(lev) < spec.num_levels:
                raise DomainError(f"level {lev} outside declared range [0, {spec.num_levels})")
        return 1.0 if int(pa) == int(pb) else 0.0
    if isinstance(spec, DistributionEmbedding):
        return spec.sigma2 * float(np.exp(-spec.lam * mmd2(spec.inner, pa, pb)))
    if isinstance(spec, WassersteinEmbedding):
        return spec.sigma2 * float(np.exp(-spec.lam * w2_squared(pa, pb)))
    if isinstance(spec, GlobalAlignment):
        return _gak_eval(spec, np.asarray(pa, dtype=float), np.asarray(pb, dtype=float))
    raise CapabilityError(f"unknown kernel spec {type(spec).__name__}")


def _column_payload(spec: KernelSpec, column: OutputColumn):
    """Validate variant homogeneity and pull out raw payloads."""
    if isinstance(spec, ProductZeroMean):
        raise CapabilityError("product kernels act on input matrices, not output columns")
    want = _ACCEPTED_VARIANT[type(spec)]
    if isinstance(column, np.ndarray):
        if column.ndim == 2 and want in ("Curve", "DistSample"):
            return list(np.asarray(column, dtype=float))
        got = "Categorical" if want == "Categorical" else "Scalar"
        if got != want or column.ndim != 1:
            raise VariantMismatchError(type(spec).__name__, got if column.ndim == 1 else f"{column.ndim}-d array")
        return np.asarray(column, dtype=float)
    if len(column) == 0:
        raise DegenerateKernelError("empty output column")
    got = column_kind(column)
    if got != want:
        raise VariantMismatchError(type(spec).__name__, got)
    if want == "Scalar":
        return np.array([v.value for v in column], dtype=float)
    if want == "Categorical":
        levels = np.array([v.level for v in column], dtype=int)
        for v in column:
            if v.num_levels != column[0].num_levels:
                raise DomainError("categorical column mixes num_levels declarations")
        return levels
    return [v.values for v in column]


def _dist_mmd2_matrix(spec: DistributionEmbedding, bags: list[np.ndarray]) -> np.ndarray:
    """Pairwise squared MMD between bags, upper triangle mirrored."""
    n = len(bags)
    sizes = {b.size for b in bags}
    if isinstance(spec.inner, Linear):
        mu = np.array([b.mean() for b in bags])
        d = mu[:, None] - mu[None, :]
        return d * d
    sigma = spec.inner.sigma
    if len(sizes) == 1:
        m = bags[0].size
        flat = np.concatenate(bags)
        self_means = np.empty(n)
        out = np.zeros((n, n))
        cross = np.empty((n, n))
        for i in range(n):
            ki = _gaussian_k(sigma, bags[i][:, None], flat[i * m :][None, :])
            row = ki.reshape(m, n - i, m).mean(axis=(0, 2))
            cross[i, i:] = row
            cross[i:, i] = row
            self_means[i] = row[0]
        for i in range(n):
            out[i] = self_means[i] + self_means - 2.0 * cross[i]
            out[i, i] = 0.0
        return out
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = mmd2(spec.inner, bags[i], bags[j])
    return out


def _w2_matrix(payload: list[np.ndarray]) -> np.ndarray:
    n = len(payload)
    sizes = {b.size for b in payload}
    if len(sizes) == 1:
        s = np.sort(np.stack(payload), axis=1)
        sq = np.einsum("ij,ij->i", s, s) / s.shape[1]
        d2 = sq[:, None] + sq[None, :] - 2.0 * (s @ s.T) / s.shape[1]
        d2 = np.maximum(d2, 0.0)
        d2 = np.triu(d2, 1)
        return d2 + d2.T
    d2 = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d2[i, j] = d2[j, i] = w2_squared(payload[i], payload[j])
    return d2


def embedding_distance_matrix(spec: KernelSpec, column: OutputColumn) -> np.ndarray:
    """Squared base distances behind an embedding kernel, pairwise.

    For the distribution embedding this is the squared MMD under the
    inner kernel; for the Wasserstein embedding the squared W2 distance.
    Lets callers calibrate lam from a preliminary sample and then build
    the Gram as sigma2 * exp(-lam * D2) without recomputing distances.
    """
    payload = _column_payload(spec, column)
    if isinstance(spec, DistributionEmbedding):
        return _dist_mmd2_matrix(spec, payload)
    if isinstance(spec, WassersteinEmbedding):
        return _w2_matrix(payload)
    raise CapabilityError("distance matrix only defined for embedding kernels")


def gram(spec: KernelSpec, column: OutputColumn) -> np.ndarray:
    """Gram matrix of the column under the kernel; exactly symmetric."""
    if isinstance(spec, ProductZeroMean):
        x = np.asarray(column, dtype=float)
        if x.ndim != 2 or x.shape[1] != len(spec.factors):
            raise DomainError("product kernel gram expects an (n, d) matrix")
        out = np.ones((x.shape[0], x.shape[0]))
        for l, f in enumerate(spec.factors):
            out *= 1.0 + gram(f, x[:, l])
        return out
    payload = _column_payload(spec, column)
    if isinstance(spec, _SCALAR_SPECS):
        return np.asarray(_scalar_eval(spec, payload[:, None], payload[None, :]))
    if isinstance(spec, Dirac):
        levels = payload
        bad = (levels < 0) | (levels >= spec.num_levels)
        if np.any(bad):
            i = int(np.nonzero(bad)[0][0])
            raise DomainError(
                f"gram entry ({i}, {i}): level {levels[i]} outside [0, {spec.num_levels})"
            )
        return (levels[:, None] == levels[None, :]).astype(float)
    if isinstance(spec, DistributionEmbedding):
        m2 = _dist_mmd2_matrix(spec, payload)
        return spec.sigma2 * np.exp(-spec.lam * m2)
    if isinstance(spec, WassersteinEmbedding):
        return spec.sigma2 * np.exp(-spec.lam * _w2_matrix(payload))
    if isinstance(spec, GlobalAlignment):
        return _gak_gram(spec, payload)
    raise CapabilityError(f"unknown kernel spec {type(spec).__name__}")


def row_kernel(spec: KernelSpec, col_a: OutputColumn, col_b: OutputColumn) -> np.ndarray:
    """Elementwise k(a_i, b_i) between two aligned columns."""
    pa = _column_payload(spec, col_a)
    pb = _column_payload(spec, col_b)
    if len(pa) != len(pb):
        raise DomainError("row_kernel needs columns of equal length")
    if isinstance(spec, _SCALAR_SPECS):
        return np.asarray(_scalar_eval(spec, pa, pb))
    if isinstance(spec, Dirac):
        return (np.asarray(pa) == np.asarray(pb)).astype(float)
    return np.array([eval_kernel(spec, a, b) for a, b in zip(pa, pb)])


def diag_mean(spec: KernelSpec, column: OutputColumn) -> float:
    """Mean of k(y_i, y_i) over the column."""
    payload = _column_payload(spec, column)
    if isinstance(spec, Linear):
        v = payload
        return float(np.mean(v * v))
    if isinstance(spec, (Gaussian, Dirac, GlobalAlignment)):
        return 1.0
    if isinstance(spec, (DistributionEmbedding, WassersteinEmbedding)):
        return float(spec.sigma2)
    if isinstance(spec, _SCALAR_SPECS):
        return float(np.mean(_scalar_eval(spec, payload, payload)))
    raise CapabilityError(f"diag_mean unsupported for {type(spec).__name__}")


def full_gram_mean(spec: KernelSpec, column: OutputColumn, gram_matrix: np.ndarray | None = None) -> float:
    """Mean over all n^2 kernel values of the column."""
    if gram_matrix is not None:
        return float(np.mean(gram_matrix))
    payload = _column_payload(spec, column)
    if isinstance(spec, Linear):
        return float(np.mean(payload)) ** 2
    if isinstance(spec, Gaussian):
        n = len(payload)
        total = 0.0
        step = 1024
        for start in range(0, n, step):
            block = _gaussian_k(spec.sigma, payload[start : start + step, None], payload[None, :])
            total += float(block.sum())
        return total / (n * n)
    return float(np.mean(gram(spec, column)))


def mmd_total(spec: KernelSpec, column: OutputColumn, gram_matrix: np.ndarray | None = None) -> float:
    """V-statistic of the total squared MMD: mean diag - mean full Gram."""
    if gram_matrix is not None:
        return float(np.mean(np.diag(gram_matrix))) - float(np.mean(gram_matrix))
    return diag_mean(spec, column) - full_gram_mean(spec, column)


# --------------------------------------------------------------------------
# MMD between two columns
# --------------------------------------------------------------------------


def _pair_mean(spec: KernelSpec, pa, pb) -> float:
    """Mean kernel value over all cross pairs of two payload columns."""
    if isinstance(spec, Linear):
        return float(np.mean(pa)) * float(np.mean(pb))
    if isinstance(spec, Gaussian):
        return float(np.mean(_gaussian_k(spec.sigma, np.asarray(pa)[:, None], np.asarray(pb)[None, :])))
    if isinstance(spec, _SCALAR_SPECS):
        return float(np.mean(_scalar_eval(spec, np.asarray(pa)[:, None], np.asarray(pb)[None, :])))
    if isinstance(spec, Dirac):
        return float(np.mean(np.asarray(pa)[:, None] == np.asarray(pb)[None, :]))
    total = 0.0
    for a in pa:
        for b in pb:
            total += eval_kernel(spec, a, b)
    return total / (len(pa) * len(pb))


def _self_mean(spec: KernelSpec, pa, unbiased: bool) -> float:
    """Mean kernel value within a column, with or without the diagonal."""
    n = len(pa)
    if unbiased and n < 2:
        raise DegenerateKernelError("unbiased MMD needs at least two points per sample")
    full = _pair_mean(spec, pa, pa)
    if not unbiased:
        return full
    if isinstance(spec, Linear):
        diag = float(np.mean(np.asarray(pa) ** 2))
    elif isinstance(spec, Gaussian):
        diag = 1.0
    elif isinstance(spec, _SCALAR_SPECS):
        diag = float(np.mean(_scalar_eval(spec, np.asarray(pa), np.asarray(pa))))
    elif isinstance(spec, Dirac):
        diag = 1.0
    else:
        diag = float(np.mean([eval_kernel(spec, a, a) for a in pa]))
    return (full * n * n - diag * n) / (n * (n - 1))


def mmd2(spec: KernelSpec, p, q, unbiased: bool = False) -> float:
    """Squared MMD between two samples (V-statistic by default).

    Elements of p and q live in the space the kernel acts on, so this
    also compares samples of curves or of sampled distributions.
    """
    pa = _column_payload(spec, np.asarray(p, dtype=float) if not _is_value_list(p) else p)
    pb = _column_payload(spec, np.asarray(q, dtype=float) if not _is_value_list(q) else q)
    if len(pa) == 0 or len(pb) == 0:
        raise DegenerateKernelError("mmd2 needs non-empty samples")
    return (
        _self_mean(spec, pa, unbiased)
        - 2.0 * _pair_mean(spec, pa, pb)
        + _self_mean(spec, pb, unbiased)
    )


def _is_value_list(col) -> bool:
    return not isinstance(col, np.ndarray) and len(col) > 0 and not isinstance(
        col[0], (int, float, np.integer, np.floating)
    )


# --------------------------------------------------------------------------
# Bandwidth selection and zero-mean verification
# --------------------------------------------------------------------------


def _lower_median(values: np.ndarray) -> float:
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise DegenerateKernelError("no pairwise distances to take a median of")
    return float(v[(v.size - 1) // 2])


def median_heuristic(
    column: OutputColumn,
    metric: str = "euclidean",
    inner: KernelSpec | None = None,
    max_points: int = 2000,
) -> float:
    """Median of pairwise distances in a column (lower median for even counts).

    metric 'euclidean' works on scalars, curves sharing a grid, and on
    the pooled draws of sampled distributions.  metric 'mmd' returns the
    median of pairwise squared MMD values under the inner kernel, and
    'wasserstein2' the median of pairwise squared W2 distances.
    """
    metric = metric.lower()
    kind = "Scalar" if isinstance(column, np.ndarray) else column_kind(column)
    if metric == "euclidean":
        if kind == "Scalar":
            v = scalar_values(column)
            if v.size > max_points:
                stride = int(np.ceil(v.size / max_points))
                v = v[::stride]
        elif kind == "DistSample":
            pooled = np.concatenate([c.values for c in column])
            if pooled.size > max_points:
                stride = int(np.ceil(pooled.size / max_points))
                pooled = pooled[::stride]
            v = pooled
        elif kind == "Curve":
            grids = {tuple(c.times.tolist()) for c in column}
            if len(grids) != 1:
                raise DomainError("euclidean metric on curves requires a shared time grid")
            mat = np.stack([c.values for c in column])
            iu = np.triu_indices(mat.shape[0], k=1)
            d2 = ((mat[iu[0]] - mat[iu[1]]) ** 2).sum(axis=1)
            dist = np.sqrt(d2)
            med = _lower_median(dist)
            if med <= 0:
                raise DegenerateKernelError("median pairwise distance is zero (all curves equal)")
            return med
        else:
            raise VariantMismatchError("euclidean median heuristic", kind)
        diff = np.abs(v[:, None] - v[None, :])
        dist = diff[np.triu_indices(v.size, k=1)]
    elif metric == "mmd":
        if kind != "DistSample":
            raise VariantMismatchError("mmd median heuristic", kind)
        if inner is None:
            raise DomainError("mmd metric needs an inner kernel")
        n = len(column)
        vals = [mmd2(inner, column[i].values, column[j].values) for i in range(n) for j in range(i + 1, n)]
        dist = np.asarray(vals)
    elif metric == "wasserstein2":
        if kind != "DistSample":
            raise VariantMismatchError("wasserstein2 median heuristic", kind)
        n = len(column)
        vals = [w2_squared(column[i].values, column[j].values) for i in range(n) for j in range(i + 1, n)]
        dist = np.asarray(vals)
    else:
        raise DomainError(f"unknown metric {metric!r}")
    med = _lower_median(dist)
    if med <= 0:
        raise DegenerateKernelError("median pairwise distance is zero (all points equal)")
    return med


def verify_zero_mean(
    spec: KernelSpec,
    marginal: MarginalDist,
    probes: np.ndarray | None = None,
    mc_n: int = 100_000,
    rng: np.random.Generator | None = None,
) -> float:
    """Monte Carlo check of the zero-mean property.

    Returns max over probe points x of |mean_t k(x, t)| with t drawn
    from the marginal.  Callers compare against their tolerance.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    draws = marginal.sample(mc_n, rng)
    if probes is None:
        probes = marginal.sample(8, rng)
    probes = np.atleast_1d(np.asarray(probes, dtype=float))
    means = _scalar_eval(spec, probes[:, None], draws[None, :]).mean(axis=1)
    return float(np.max(np.abs(means)))
