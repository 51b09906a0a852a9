"""Output value variants and the sample container used by all estimators.

An output column is either a plain float array (scalar outputs, the fast
path) or a list of :class:`OutputValue` objects for structured outputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np


@dataclass(frozen=True)
class Scalar:
    value: float

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError(f"scalar output must be finite, got {self.value}")


@dataclass(frozen=True)
class Categorical:
    """A level in {0, ..., num_levels-1}."""

    level: int
    num_levels: int

    def __post_init__(self):
        if self.num_levels < 2:
            raise ValueError("categorical output needs at least two levels")
        if not 0 <= self.level < self.num_levels:
            raise ValueError(
                f"level {self.level} outside [0, {self.num_levels})"
            )


@dataclass(frozen=True)
class Curve:
    """A trajectory sampled on a strictly increasing time grid."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if times.ndim != 1 or values.shape != times.shape:
            raise ValueError("curve times and values must be 1-d and equal length")
        if times.size == 0:
            raise ValueError("curve must contain at least one sample")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("curve times must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("curve values must be finite")


@dataclass(frozen=True)
class DistSample:
    """An output distribution represented by an i.i.d. sample."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("distribution sample must be a non-empty 1-d array")
        if not np.all(np.isfinite(values)):
            raise ValueError("distribution sample values must be finite")


OutputValue = Union[Scalar, Categorical, Curve, DistSample]

#: What estimators accept as an output column.
OutputColumn = Union[np.ndarray, Sequence[OutputValue]]


def scalar_values(column: OutputColumn) -> np.ndarray | None:
    """Return the column as a float array if it is all-scalar, else None."""
    if isinstance(column, np.ndarray):
        return np.asarray(column, dtype=float)
    if len(column) > 0 and all(isinstance(v, Scalar) for v in column):
        return np.array([v.value for v in column], dtype=float)
    return None


def column_kind(column: OutputColumn) -> str:
    """Name of the homogeneous variant held by the column."""
    if isinstance(column, np.ndarray):
        return "Scalar"
    kinds = {type(v).__name__ for v in column}
    if len(kinds) != 1:
        raise ValueError(f"mixed output column: {sorted(kinds)}")
    return kinds.pop()


@dataclass
class SampleSet:
    """An input matrix paired with one output per row."""

    x: np.ndarray
    y: OutputColumn
    input_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim != 2:
            raise ValueError("inputs must form an (n, d) matrix")
        if len(self.y) != self.x.shape[0]:
            raise ValueError(
                f"{len(self.y)} outputs for {self.x.shape[0]} input rows"
            )
        if not self.input_names:
            self.input_names = [f"x{l + 1}" for l in range(self.x.shape[1])]
        if len(self.input_names) != self.x.shape[1]:
            raise ValueError("one name per input column required")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]
