"""Estimators of kernel-based sensitivity indices.

Four routes to the closed quantities, with different evaluation costs:

* double loop: conditional resampling, (n+1)*m model evaluations per
  subset, works for dependent inputs;
* pick-freeze: shared design of (d+2)*n evaluations giving first-order
  and total indices for every input (independent inputs only);
* rank / nearest-neighbour: given-data estimators, no extra model
  evaluations;
* HSIC statistics with zero-mean product kernels on the inputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .data import OutputColumn, SampleSet
from .errors import (
    AssumptionViolatedError,
    DegenerateOutputError,
    DomainError,
)
from .kernels import KernelSpec, ProductZeroMean
from .marginals import MarginalDist
from .sampling import InputSampler, require_independent, substream
from .subsets import subset_of


@dataclass
class ModelFn:
    """A vectorized model; counts evaluations for budget assertions."""

    d: int
    func: Callable
    name: str = "model"
    eval_count: int = 0

    def __call__(self, x: np.ndarray, rng: np.random.Generator | None = None) -> OutputColumn:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.d:
            raise DomainError(f"model {self.name} expects {self.d} inputs, got {x.shape[1]}")
        if rng is None:
            rng = substream(0, "model-default", self.name)
        self.eval_count += x.shape[0]
        return self.func(x, rng)


@dataclass
class EstimatorConfig:
    n: int = 1000
    m: int = 100
    n_A: int | None = None
    n_I: int = 10
    seed: int = 0
    unbiased: bool = False

    def resolved_n_a(self, n: int) -> int:
        return min(n, 500) if self.n_A is None else min(self.n_A, n)


def _take(column: OutputColumn, idx: np.ndarray):
    if isinstance(column, np.ndarray):
        return column[idx]
    return [column[i] for i in idx]


# --------------------------------------------------------------------------
# Pick-freeze
# --------------------------------------------------------------------------


@dataclass
class PickFreezeDesign:
    """Two independent input matrices plus cached model outputs.

    The frozen matrix for input l takes column l from x and every other
    column from x_prime, so evaluating y, y_prime and one y_tilde per
    input costs (d+2)*n model runs in total.
    """

    x: np.ndarray
    x_prime: np.ndarray
    seed: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def tilde(self, l: int) -> np.ndarray:
        if not 0 <= l < self.d:
            raise DomainError(f"input index {l} outside [0, {self.d})")
        out = self.x_prime.copy()
        out[:, l] = self.x[:, l]
        return out

    def outputs(self, model: ModelFn, which) -> OutputColumn:
        """which is 'y', 'y_prime', or an input index for the frozen matrix."""
        key = (model.name, which)
        if key not in self._cache:
            if which == "y":
                mat = self.x
            elif which == "y_prime":
                mat = self.x_prime
            else:
                mat = self.tilde(int(which))
            self._cache[key] = model(mat, substream(self.seed, "pf-eval", model.name, str(which)))
        return self._cache[key]


def pick_freeze_design(sampler: InputSampler, n: int, rng: np.random.Generator, seed: int = 0) -> PickFreezeDesign:
    """Draw the two independent design matrices."""
    require_independent(sampler, "pick-freeze")
    if n < 2:
        raise DomainError("pick-freeze needs n >= 2")
    return PickFreezeDesign(x=sampler.sample(n, rng), x_prime=sampler.sample(n, rng), seed=seed)


def sobol_from_columns(y: np.ndarray, yp: np.ndarray, yt: np.ndarray) -> tuple[float, float, float]:
    """Sobol pick-freeze estimates (V_l, V_{-l}, V) from output columns."""
    y = np.asarray(y, dtype=float)
    yp = np.asarray(yp, dtype=float)
    yt = np.asarray(yt, dtype=float)
    v_l = float(np.mean(y * yt - y * yp))
    v_compl = float(np.mean(yp * yt - yp * y))
    v_total = float(np.mean(y * y) - np.mean(y) ** 2)
    return v_l, v_compl, v_total


def saltelli_sobol(model: ModelFn, design: PickFreezeDesign, l: int) -> tuple[float, float, float]:
    """Sobol pick-freeze estimates (V_l, V_{-l}, V) for scalar outputs.

    V_l estimates the closed first-order variance of input l, V_{-l}
    the closed variance of all other inputs, and V the output variance
    (V-statistic).  Normalization is left to the caller so a zero
    variance can be flagged rather than divided by.
    """
    y = design.outputs(model, "y")
    yp = design.outputs(model, "y_prime")
    yt = design.outputs(model, l)
    return sobol_from_columns(y, yp, yt)


def mmd_from_columns(
    spec: KernelSpec, y: OutputColumn, yp: OutputColumn, yt: OutputColumn
) -> tuple[float, float, float]:
    """MMD pick-freeze estimates (M2_l, M2_{-l}, M2_tot) from columns."""
    k_y_yt = kernels.row_kernel(spec, y, yt)
    k_y_yp = kernels.row_kernel(spec, y, yp)
    k_yp_yt = kernels.row_kernel(spec, yp, yt)
    k_yp_y = kernels.row_kernel(spec, yp, y)
    m2_l = float(np.mean(k_y_yt - k_y_yp))
    m2_compl = float(np.mean(k_yp_yt - k_yp_y))
    m2_tot = kernels.mmd_total(spec, y)
    return m2_l, m2_compl, m2_tot


def pick_freeze_mmd(
    model: ModelFn, design: PickFreezeDesign, l: int, spec: KernelSpec
) -> tuple[float, float, float]:
    """MMD pick-freeze estimates (M2_l, M2_{-l}, M2_tot).

    With the Linear kernel on scalar outputs these reduce, term by term,
    to the Sobol estimates above.
    """
    y = design.outputs(model, "y")
    yp = design.outputs(model, "y_prime")
    yt = design.outputs(model, l)
    return mmd_from_columns(spec, y, yp, yt)


# --------------------------------------------------------------------------
# Double loop
# --------------------------------------------------------------------------


def double_loop_mmd(
    model: ModelFn,
    sampler: InputSampler,
    subset_members: Sequence[int],
    spec: KernelSpec,
    cfg: EstimatorConfig,
) -> float:
    """E_{X_A} MMD^2(P_Y, P_{Y|X_A}) by conditional resampling.

    Costs (n+1)*m model evaluations: one marginal bag of size m plus a
    conditional bag of size m per outer point.  Each inner squared MMD
    is the V-statistic between the two bags.
    """
    a = tuple(sorted(set(int(l) for l in subset_members)))
    if not a:
        raise DomainError("double loop needs a non-empty subset; the empty set has value 0 by definition")
    mask = subset_of(a, sampler.d)
    rng_marg = substream(cfg.seed, "dl-marginal", mask)
    x_marg = sampler.sample(cfg.m, rng_marg)
    y_marg = model(x_marg, substream(cfg.seed, "dl-marginal-eval", mask))
    marg_self = kernels._pair_mean(spec, kernels._column_payload(spec, y_marg), kernels._column_payload(spec, y_marg))
    pay_marg = kernels._column_payload(spec, y_marg)
    rng_outer = substream(cfg.seed, "dl-outer", mask)
    total = 0.0
    for i in range(cfg.n):
        x_i = sampler.sample(1, rng_outer)[0]
        x_cond = sampler.conditional_sample(a, x_i[list(a)], cfg.m, substream(cfg.seed, "dl-cond", mask, i))
        y_cond = model(x_cond, substream(cfg.seed, "dl-cond-eval", mask, i))
        pay_cond = kernels._column_payload(spec, y_cond)
        cond_self = kernels._pair_mean(spec, pay_cond, pay_cond)
        cross = kernels._pair_mean(spec, pay_marg, pay_cond)
        total += marg_self - 2.0 * cross + cond_self
    return total / cfg.n


# --------------------------------------------------------------------------
# Rank estimator (given data, first order)
# --------------------------------------------------------------------------


def rank_permutation(values: np.ndarray) -> np.ndarray:
    """Index of the next point in the ordering of the values, wrapping around.

    Ties are broken by original index (stable ranks).  With N the result,
    x[N[i]] is the successor of x[i] in sorted order; the largest point
    maps to the smallest.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.size < 2:
        raise DomainError("rank permutation needs a 1-d sample with n >= 2")
    order = np.argsort(values, kind="stable")
    nxt = np.empty(values.size, dtype=int)
    nxt[order[:-1]] = order[1:]
    nxt[order[-1]] = order[0]
    return nxt


def rank_mmd(
    sample: SampleSet,
    l: int,
    spec: KernelSpec,
    gram_matrix: np.ndarray | None = None,
) -> float:
    """First-order closed MMD estimate from ranked neighbours in input l."""
    nxt = rank_permutation(sample.x[:, l])
    if gram_matrix is not None:
        pair_term = float(np.mean(gram_matrix[np.arange(sample.n), nxt]))
        full = float(np.mean(gram_matrix))
    else:
        pair_term = float(np.mean(kernels.row_kernel(spec, sample.y, _take(sample.y, nxt))))
        full = kernels.full_gram_mean(spec, sample.y)
    return pair_term - full


# --------------------------------------------------------------------------
# Nearest-neighbour estimators (given data, any subset)
# --------------------------------------------------------------------------


def _standardized(x: np.ndarray, cols: Sequence[int]) -> np.ndarray:
    sub = x[:, list(cols)]
    sd = sub.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (sub - sub.mean(axis=0)) / sd


def _nearest_index(anchors: np.ndarray, xs: np.ndarray, anchor_ids: np.ndarray, k: int) -> np.ndarray:
    """k nearest points (including self, which always comes first).

    Distance ties resolve to the smallest original index; the anchor's
    own row is forced first.
    """
    out = np.empty((anchors.shape[0], k), dtype=int)
    step = 256
    n = xs.shape[0]
    for start in range(0, anchors.shape[0], step):
        block = anchors[start : start + step]
        d2 = ((block[:, None, :] - xs[None, :, :]) ** 2).sum(axis=2)
        d2[np.arange(block.shape[0]), anchor_ids[start : start + step]] = -1.0
        idx = np.argsort(d2, axis=1, kind="stable")[:, :k]
        out[start : start + step] = idx
    return out


def knn_closed_value(
    sample: SampleSet,
    subset_members: Sequence[int],
    spec: KernelSpec,
    cfg: EstimatorConfig,
    indices: np.ndarray | None = None,
    gram_matrix: np.ndarray | None = None,
) -> float:
    """Closed MMD estimate for a subset from second-nearest neighbours.

    Subsamples n_A anchors (uniform with replacement) and pairs each
    with its nearest distinct point in the standardized coordinates of
    the subset.  Passing indices overrides the subsample (tests use the
    identity to compare against the rank estimator).
    """
    a = tuple(sorted(set(int(l) for l in subset_members)))
    if not a:
        return 0.0
    mask = subset_of(a, sample.d)
    n = sample.n
    if indices is None:
        rng = substream(cfg.seed, "knn-closed", mask)
        indices = rng.integers(0, n, size=cfg.resolved_n_a(n))
    indices = np.asarray(indices, dtype=int)
    xs = _standardized(sample.x, a)
    nb = _nearest_index(xs[indices], xs, indices, 2)[:, 1]
    if gram_matrix is not None:
        pair_term = float(np.mean(gram_matrix[indices, nb]))
        full = float(np.mean(gram_matrix))
    else:
        pair_term = float(
            np.mean(kernels.row_kernel(spec, _take(sample.y, indices), _take(sample.y, nb)))
        )
        full = kernels.full_gram_mean(spec, sample.y)
    return pair_term - full


def knn_complementary_value(
    sample: SampleSet,
    subset_members: Sequence[int],
    spec: KernelSpec,
    cfg: EstimatorConfig,
    indices: np.ndarray | None = None,
    gram_matrix: np.ndarray | None = None,
) -> float:
    """Expected conditional total MMD, conditioning on the complement.

    For each anchor, takes the n_I nearest points in the standardized
    complement coordinates and forms the V-statistic (mean diagonal
    minus mean Gram) of their outputs; averages over anchors.  When the
    subset is the full set the complement is empty, every distance ties
    at zero and the smallest-index rule makes the neighbourhood global.
    """
    a = tuple(sorted(set(int(l) for l in subset_members)))
    comp = tuple(l for l in range(sample.d) if l not in a)
    mask = subset_of(a, sample.d) if a else 0
    n = sample.n
    n_i = min(cfg.n_I, n)
    if indices is None:
        rng = substream(cfg.seed, "knn-compl", mask)
        indices = rng.integers(0, n, size=cfg.resolved_n_a(n))
    indices = np.asarray(indices, dtype=int)
    if comp:
        xs = _standardized(sample.x, comp)
        hoods = _nearest_index(xs[indices], xs, indices, n_i)
    else:
        base = np.arange(n_i, dtype=int)
        hoods = np.tile(base, (indices.size, 1))
    if gram_matrix is None:
        gram_matrix = kernels.gram(spec, sample.y)
    diag = np.diag(gram_matrix)
    total = 0.0
    for row in hoods:
        sub = gram_matrix[np.ix_(row, row)]
        total += float(np.mean(diag[row])) - float(np.mean(sub))
    return total / hoods.shape[0]


# --------------------------------------------------------------------------
# HSIC statistics
# --------------------------------------------------------------------------


_ZERO_MEAN_OK: set = set()


def ensure_zero_mean(
    factors: Sequence[KernelSpec],
    marginals: Sequence[MarginalDist],
    tol: float = 0.01,
    mc_n: int = 100_000,
    seed: int = 0,
):
    """Raise if any factor kernel fails the zero-mean check for its marginal.

    The check is Monte Carlo (mc_n draws, a handful of probe points) and
    cached per (kernel, marginal) pair for the lifetime of the process.
    """
    for l, (spec, marg) in enumerate(zip(factors, marginals)):
        key = (spec, marg)
        if key in _ZERO_MEAN_OK:
            continue
        worst = kernels.verify_zero_mean(spec, marg, mc_n=mc_n, rng=substream(seed, "zero-mean", l))
        if worst > tol:
            raise AssumptionViolatedError(
                f"input kernel {type(spec).__name__} for input {l + 1} is not zero-mean "
                f"under {type(marg).__name__} (max |mean embedding| = {worst:.4f} > {tol}); "
                "the additive HSIC decomposition needs zero-mean factor kernels"
            )
        _ZERO_MEAN_OK.add(key)


@dataclass
class HsicWorkspace:
    """Per-factor input Grams and the output Gram, computed once per sample."""

    input_grams: list
    output_gram: np.ndarray


def hsic_workspace(sample: SampleSet, input_spec: ProductZeroMean, output_spec: KernelSpec,
                   output_gram: np.ndarray | None = None) -> HsicWorkspace:
    if len(input_spec.factors) != sample.d:
        raise DomainError(
            f"{len(input_spec.factors)} factor kernels for {sample.d} inputs"
        )
    input_grams = [kernels.gram(f, sample.x[:, l]) for l, f in enumerate(input_spec.factors)]
    if output_gram is None:
        output_gram = kernels.gram(output_spec, sample.y)
    return HsicWorkspace(input_grams=input_grams, output_gram=output_gram)


def hsic_stat(
    sample: SampleSet,
    subset_members: Sequence[int],
    input_spec: ProductZeroMean,
    output_spec: KernelSpec,
    flavor: str = "v",
    marginals: Sequence[MarginalDist] | None = None,
    workspace: HsicWorkspace | None = None,
) -> float:
    """HSIC between the subset of inputs and the output.

    Computes the simplified statistic E[(k_A - 1) k_Y] with
    k_A = prod_{l in A} (1 + k_l); exact sums over all index pairs for
    the V flavour, off-diagonal pairs for the U flavour.  The empty
    subset gives exactly zero.  When marginals are supplied the factor
    kernels are first checked for the zero-mean property.
    """
    a = tuple(sorted(set(int(l) for l in subset_members)))
    if flavor not in ("u", "v"):
        raise DomainError(f"flavor must be 'u' or 'v', got {flavor!r}")
    if not a:
        return 0.0
    if marginals is not None:
        ensure_zero_mean([input_spec.factors[l] for l in a], [marginals[l] for l in a])
    if workspace is None:
        workspace = hsic_workspace(sample, input_spec, output_spec)
    k_a = np.ones((sample.n, sample.n))
    for l in a:
        k_a *= 1.0 + workspace.input_grams[l]
    t = (k_a - 1.0) * workspace.output_gram
    n = sample.n
    if flavor == "v":
        return float(t.mean())
    if n < 2:
        raise DomainError("u-statistic needs n >= 2")
    return float((t.sum() - np.trace(t)) / (n * (n - 1)))


def degenerate_total_guard(total: float, what: str, tol: float = 0.0) -> float:
    """Shared check before normalizing by a total variability."""
    if not np.isfinite(total) or total <= tol:
        raise DegenerateOutputError(f"{what} is not positive ({total}); output looks constant")
    return total
