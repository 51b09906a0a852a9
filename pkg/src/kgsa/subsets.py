"""Subset bookkeeping, closed-value tables and their combination.

Subsets of inputs are represented as bitmasks over ``d`` inputs.  A
closed-value table maps every subset A to a closed quantity (closed
Sobol variance, closed squared MMD, ...); interaction terms follow by
inclusion-exclusion and normalized indices by dividing out the total.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import DegenerateOutputError, DomainError, IncompleteTableError

MAX_EXHAUSTIVE_D = 24


def subset_of(members: Iterable[int], d: int) -> int:
    """Bitmask for a collection of 0-based input indices."""
    mask = 0
    for l in members:
        if not 0 <= l < d:
            raise DomainError(f"input index {l} outside [0, {d})")
        mask |= 1 << l
    return mask


def members(mask: int) -> tuple[int, ...]:
    out = []
    l = 0
    while mask:
        if mask & 1:
            out.append(l)
        mask >>= 1
        l += 1
    return tuple(out)


def subset_size(mask: int) -> int:
    return bin(mask).count("1")


def complement(mask: int, d: int) -> int:
    return ((1 << d) - 1) ^ mask


def all_subsets(d: int) -> range:
    if d > MAX_EXHAUSTIVE_D:
        raise DomainError(
            f"exhaustive subset enumeration capped at d={MAX_EXHAUSTIVE_D}, got d={d}"
        )
    return range(1 << d)


def format_subset(mask: int) -> str:
    """1-based, comma separated; the empty subset prints as '{}'."""
    mem = members(mask)
    return "{" + ",".join(str(l + 1) for l in mem) + "}"


@dataclass
class ClosedValueTable:
    """Closed values V_A (variance scale) or M2_A (kernel scale) per subset."""

    d: int
    values: dict[int, float]
    total: float
    noise_budget: float = 0.0

    def __post_init__(self):
        if self.d < 1 or self.d > MAX_EXHAUSTIVE_D:
            raise DomainError(f"table dimension must be in [1, {MAX_EXHAUSTIVE_D}]")
        if not np.isfinite(self.total) or self.total <= 0:
            raise DegenerateOutputError(
                f"total output variability must be positive, got {self.total}"
            )
        if 0 in self.values and self.values[0] != 0.0:
            raise DomainError("the empty subset must have closed value 0")
        full = (1 << self.d) - 1
        if full in self.values and self.values[full] > self.total + self.noise_budget:
            raise DomainError(
                f"closed value of the full set ({self.values[full]}) exceeds the "
                f"total ({self.total}) beyond the noise budget ({self.noise_budget})"
            )

    def require_complete(self):
        for mask in all_subsets(self.d):
            if mask not in self.values:
                raise IncompleteTableError(members(mask))


def mobius_combine(table: ClosedValueTable) -> dict[int, float]:
    """Interaction terms by inclusion-exclusion over the complete table."""
    table.require_complete()
    f = np.array([table.values[mask] for mask in all_subsets(table.d)], dtype=float)
    for l in range(table.d):
        bit = 1 << l
        for mask in range(1 << table.d):
            if mask & bit:
                f[mask] -= f[mask ^ bit]
    return {mask: float(f[mask]) for mask in all_subsets(table.d)}


@dataclass
class IndexReport:
    """Normalized sensitivity indices plus per-input summaries."""

    d: int
    raw: dict[int, float]
    normalized: dict[int, float]
    first_order: np.ndarray
    total: np.ndarray
    negative_terms: list[int] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "raw": {format_subset(m): v for m, v in self.raw.items()},
            "normalized": {format_subset(m): v for m, v in self.normalized.items()},
            "first_order": [float(v) for v in self.first_order],
            "total": [float(v) for v in self.total],
            "negative_terms": [format_subset(m) for m in self.negative_terms],
            "metadata": self.metadata,
        }


def normalize(table: ClosedValueTable, metadata: dict | None = None) -> IndexReport:
    """Turn a complete closed-value table into normalized indices.

    Normalized interaction terms can legitimately be negative for the
    kernel-based tables; they are flagged, never clipped.
    """
    interactions = mobius_combine(table)
    normalized = {m: v / table.total for m, v in interactions.items()}
    first = np.array([normalized[1 << l] for l in range(table.d)])
    total = np.array(
        [1.0 - table.values[complement(1 << l, table.d)] / table.total for l in range(table.d)]
    )
    negative = [m for m, v in normalized.items() if v < 0 and m != 0]
    return IndexReport(
        d=table.d,
        raw=interactions,
        normalized=normalized,
        first_order=first,
        total=total,
        negative_terms=negative,
        metadata=metadata or {},
    )


def categorical_one_vs_all(cond_probs: np.ndarray, weights: np.ndarray) -> float:
    """Aggregated one-vs-all Sobol index of a categorical output.

    cond_probs[s, i] = P(Y = i | state s) over the conditioning states,
    weights[s] = P(state s).  Equals the normalized first-order MMD
    index under the equality kernel on levels.
    """
    cond = np.asarray(cond_probs, dtype=float)
    w = np.asarray(weights, dtype=float)
    if cond.ndim != 2 or w.ndim != 1 or cond.shape[0] != w.size:
        raise DomainError("need one probability row per conditioning state")
    if np.any(cond < -1e-12) or np.any(w < -1e-12):
        raise DomainError("probabilities must be non-negative")
    if not np.allclose(cond.sum(axis=1), 1.0, atol=1e-9):
        raise DomainError("conditional probability rows must sum to one")
    if not np.isclose(w.sum(), 1.0, atol=1e-9):
        raise DomainError("state weights must sum to one")
    marg = w @ cond
    denom = float(np.sum(marg * (1.0 - marg)))
    if denom <= 0:
        raise DegenerateOutputError("output category is almost surely constant")
    dev = cond - marg[None, :]
    num = float(np.sum(w[:, None] * dev * dev))
    return num / denom
