"""Shapley effects over closed-value tables.

The value of a coalition A of inputs is a closed sensitivity quantity
(variance, squared MMD, or HSIC based).  Two aggregation routes: the
exact permutation-free formula for small d, and permutation sampling
with mandatory caching of coalition values for larger d.

Value tables pin the endpoints val(empty) = 0 and val(full) = normalizer,
which is the deterministic-model convention and makes the efficiency
property (effects summing to one) hold exactly for both routes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .data import SampleSet
from .errors import DomainError
from .estimators import (
    EstimatorConfig,
    HsicWorkspace,
    degenerate_total_guard,
    hsic_stat,
    hsic_workspace,
    knn_closed_value,
    knn_complementary_value,
)
from .kernels import KernelSpec, ProductZeroMean
from .marginals import MarginalDist
from .sampling import substream
from .subsets import members, subset_size

MAX_EXACT_D = 14


@dataclass
class ValueFunction:
    """Coalition values with a lazy provider and mandatory caching."""

    d: int
    normalizer: float
    kind: str
    provider: Callable | None = None
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        full = (1 << self.d) - 1
        self.values.setdefault(0, 0.0)
        self.values.setdefault(full, self.normalizer)

    def __call__(self, mask: int) -> float:
        if mask not in self.values:
            if self.provider is None:
                raise DomainError(f"no cached value for subset mask {mask} and no provider")
            self.values[mask] = float(self.provider(mask))
        return self.values[mask]

    @classmethod
    def from_table(cls, d: int, values: dict, normalizer: float, kind: str) -> "ValueFunction":
        vals = dict(values)
        vals[0] = 0.0
        vals[(1 << d) - 1] = normalizer
        return cls(d=d, normalizer=normalizer, kind=kind, values=vals)


@dataclass
class ShapleyReport:
    effects: np.ndarray
    normalizer: float
    kind: str
    method: str
    num_perms: int | None = None
    negative_effects: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "effects": [float(v) for v in self.effects],
            "normalizer": float(self.normalizer),
            "kind": self.kind,
            "method": self.method,
            "num_perms": self.num_perms,
            "negative_effects": [int(l) + 1 for l in self.negative_effects],
            "metadata": self.metadata,
        }


def shapley_exact(val: ValueFunction) -> np.ndarray:
    """Exact Shapley effects; O(d 2^d), capped at d = 14."""
    d = val.d
    if d > MAX_EXACT_D:
        raise DomainError(
            f"exact Shapley aggregation is capped at d={MAX_EXACT_D}; "
            "use shapley_permutation for larger problems"
        )
    weights = [1.0 / (d * math.comb(d - 1, s)) for s in range(d)]
    effects = np.zeros(d)
    for mask in range(1 << d):
        s = subset_size(mask)
        v_a = val(mask)
        for l in range(d):
            bit = 1 << l
            if mask & bit:
                continue
            effects[l] += weights[s] * (val(mask | bit) - v_a)
    return effects / val.normalizer


def shapley_permutation(
    val: ValueFunction,
    num_perms: int,
    seed: int = 0,
    permutations: Sequence[np.ndarray] | None = None,
) -> np.ndarray:
    """Shapley effects by permutation sampling.

    Walks each permutation once, so every marginal contribution reuses
    the cached coalition values.  Passing explicit permutations makes
    the sampling step deterministic (tests enumerate all orders).
    """
    d = val.d
    if permutations is None:
        if num_perms < 1:
            raise DomainError("need at least one permutation")
        rng = substream(seed, "shapley-perms")
        permutations = [rng.permutation(d) for _ in range(num_perms)]
    effects = np.zeros(d)
    for perm in permutations:
        mask = 0
        prev = val(0)
        for l in perm:
            mask |= 1 << int(l)
            cur = val(mask)
            effects[int(l)] += cur - prev
            prev = cur
    return effects / (len(permutations) * val.normalizer)


def _aggregate(val: ValueFunction, num_perms: int | None, seed: int) -> tuple[np.ndarray, str, int | None]:
    if num_perms is None and val.d <= MAX_EXACT_D:
        return shapley_exact(val), "exact", None
    perms = num_perms if num_perms is not None else 200
    return shapley_permutation(val, perms, seed=seed), "permutation", perms


def mmd_value_table(
    sample: SampleSet,
    spec: KernelSpec,
    cfg: EstimatorConfig,
    route: str = "complementary",
    gram_matrix: np.ndarray | None = None,
) -> ValueFunction:
    """Coalition values from given data via nearest-neighbour estimators.

    route 'complementary' estimates the expected conditional total MMD
    given the complement (the quantity whose Shapley aggregation equals
    the closed one), route 'closed' the closed MMD itself.
    """
    if gram_matrix is None:
        gram_matrix = kernels.gram(spec, sample.y)
    total = kernels.mmd_total(spec, sample.y, gram_matrix)
    degenerate_total_guard(total, "total squared MMD")
    if route == "complementary":
        provider = lambda mask: knn_complementary_value(
            sample, members(mask), spec, cfg, gram_matrix=gram_matrix
        )
    elif route == "closed":
        provider = lambda mask: knn_closed_value(
            sample, members(mask), spec, cfg, gram_matrix=gram_matrix
        )
    else:
        raise DomainError(f"unknown route {route!r}")
    return ValueFunction(d=sample.d, normalizer=total, kind=f"mmd-{route}", provider=provider)


def mmd_shapley(
    sample: SampleSet,
    spec: KernelSpec,
    cfg: EstimatorConfig,
    route: str = "complementary",
    num_perms: int | None = None,
    gram_matrix: np.ndarray | None = None,
) -> ShapleyReport:
    """Shapley effects of the MMD index from given data."""
    val = mmd_value_table(sample, spec, cfg, route=route, gram_matrix=gram_matrix)
    effects, method, perms = _aggregate(val, num_perms, cfg.seed)
    return ShapleyReport(
        effects=effects,
        normalizer=val.normalizer,
        kind=val.kind,
        method=method,
        num_perms=perms,
        negative_effects=[l for l in range(sample.d) if effects[l] < 0],
        metadata={"n": sample.n, "n_A": cfg.resolved_n_a(sample.n), "n_I": cfg.n_I},
    )


def hsic_value_table(
    sample: SampleSet,
    input_spec: ProductZeroMean,
    output_spec: KernelSpec,
    cfg: EstimatorConfig,
    flavor: str = "v",
    marginals: Sequence[MarginalDist] | None = None,
    workspace: HsicWorkspace | None = None,
) -> ValueFunction:
    """Coalition values HSIC(X_A, Y) sharing one Gram workspace."""
    if workspace is None:
        workspace = hsic_workspace(sample, input_spec, output_spec)
    full = tuple(range(sample.d))
    total = hsic_stat(sample, full, input_spec, output_spec, flavor, marginals=marginals, workspace=workspace)
    degenerate_total_guard(total, "HSIC of the full input vector")
    provider = lambda mask: hsic_stat(
        sample, members(mask), input_spec, output_spec, flavor, workspace=workspace
    )
    return ValueFunction(d=sample.d, normalizer=total, kind=f"hsic-{flavor}", provider=provider)


def hsic_shapley(
    sample: SampleSet,
    input_spec: ProductZeroMean,
    output_spec: KernelSpec,
    cfg: EstimatorConfig,
    flavor: str = "v",
    num_perms: int | None = None,
    marginals: Sequence[MarginalDist] | None = None,
    workspace: HsicWorkspace | None = None,
) -> ShapleyReport:
    """Shapley effects of the HSIC index."""
    val = hsic_value_table(
        sample, input_spec, output_spec, cfg, flavor=flavor, marginals=marginals, workspace=workspace
    )
    effects, method, perms = _aggregate(val, num_perms, cfg.seed)
    return ShapleyReport(
        effects=effects,
        normalizer=val.normalizer,
        kind=val.kind,
        method=method,
        num_perms=perms,
        negative_effects=[l for l in range(sample.d) if effects[l] < 0],
        metadata={"n": sample.n, "flavor": flavor},
    )
