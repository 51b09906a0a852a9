"""Shapley aggregation: efficiency, unbiasedness, and estimator routes."""
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgsa import kernels
from kgsa.data import SampleSet
from kgsa.errors import DegenerateOutputError, DomainError
from kgsa.estimators import EstimatorConfig
from kgsa.kernels import Gaussian, ProductZeroMean, SobolevZeroMean
from kgsa.sampling import substream
from kgsa.shapley import (
    ShapleyReport,
    ValueFunction,
    hsic_shapley,
    mmd_shapley,
    mmd_value_table,
    shapley_exact,
    shapley_permutation,
)
from kgsa.subsets import all_subsets, members, subset_of
from kgsa.testbed import (
    DiscreteEnumerable,
    enum_complementary_closed,
    enum_mmd_closed,
    enum_mmd_total,
)


def _monotone_table(d, rng, kind="test"):
    """A random monotone coalition table normalized to val(full) = 1."""
    w = rng.random(d) + 0.1
    raw = {mask: float(sum(w[l] for l in members(mask)) ** 1.3) for mask in all_subsets(d)}
    full = raw[(1 << d) - 1]
    vals = {mask: v / full for mask, v in raw.items()}
    return ValueFunction.from_table(d, vals, normalizer=1.0, kind=kind)


# --------------------------------------------------------------------------
# Value function bookkeeping
# --------------------------------------------------------------------------


def test_value_function_pins_endpoints():
    val = ValueFunction(d=2, normalizer=0.7, kind="test", provider=lambda m: 99.0)
    assert val(0) == 0.0
    assert val(3) == 0.7
    assert val(1) == 99.0  # only interior masks hit the provider


def test_value_function_without_provider_requires_cache():
    val = ValueFunction.from_table(2, {1: 0.2, 2: 0.3}, normalizer=1.0, kind="test")
    assert val(1) == 0.2
    with pytest.raises(DomainError):
        ValueFunction(d=2, normalizer=1.0, kind="test")(1)


def test_permutation_route_needs_at_least_one_perm():
    val = _monotone_table(3, np.random.default_rng(0))
    with pytest.raises(DomainError):
        shapley_permutation(val, 0)


def test_exact_route_capped_at_fourteen_inputs():
    val = ValueFunction(d=15, normalizer=1.0, kind="test", provider=lambda m: 0.5)
    with pytest.raises(DomainError):
        shapley_exact(val)


# --------------------------------------------------------------------------
# Exact aggregation
# --------------------------------------------------------------------------


def test_two_input_hand_formula():
    vals = {1: 0.3, 2: 0.5}
    val = ValueFunction.from_table(2, vals, normalizer=1.0, kind="test")
    effects = shapley_exact(val)
    assert effects[0] == pytest.approx(0.5 * (0.3 + (1.0 - 0.5)), abs=1e-15)
    assert effects[1] == pytest.approx(0.5 * (0.5 + (1.0 - 0.3)), abs=1e-15)


def test_additive_values_give_proportional_effects():
    w = np.array([0.2, 0.5, 0.3])
    vals = {mask: float(sum(w[l] for l in members(mask))) for mask in all_subsets(3)}
    val = ValueFunction.from_table(3, vals, normalizer=1.0, kind="test")
    assert np.allclose(shapley_exact(val), w, atol=1e-12)


@given(st.integers(min_value=1, max_value=6), st.data())
@settings(max_examples=30, deadline=None)
def test_exact_effects_sum_to_one(d, data):
    vals = {
        mask: data.draw(st.floats(min_value=-0.5, max_value=1.5))
        for mask in all_subsets(d)
    }
    val = ValueFunction.from_table(d, vals, normalizer=1.0, kind="test")
    assert shapley_exact(val).sum() == pytest.approx(1.0, abs=1e-10)


def test_all_permutations_reproduce_exact():
    rng = np.random.default_rng(1)
    val = _monotone_table(4, rng)
    perms = [np.asarray(p) for p in itertools.permutations(range(4))]
    got = shapley_permutation(val, len(perms), permutations=perms)
    assert np.allclose(got, shapley_exact(val), atol=1e-12)


# --------------------------------------------------------------------------
# Permutation sampling
# --------------------------------------------------------------------------


def test_permutation_effects_sum_to_one_by_telescoping():
    val = _monotone_table(7, np.random.default_rng(2))
    got = shapley_permutation(val, 11, seed=5)
    assert got.sum() == pytest.approx(1.0, abs=1e-12)


def test_permutation_sampling_is_unbiased():
    rng = np.random.default_rng(3)
    val = _monotone_table(5, rng)
    exact = shapley_exact(val)
    runs = np.stack([shapley_permutation(val, 50, seed=s) for s in range(200)])
    se = runs.std(axis=0, ddof=1) / np.sqrt(runs.shape[0])
    assert np.all(np.abs(runs.mean(axis=0) - exact) < 4.0 * se)


def test_two_hundred_permutations_land_close_for_six_inputs():
    rng = np.random.default_rng(4)
    val = _monotone_table(6, rng)
    exact = shapley_exact(val)
    worst = max(
        np.max(np.abs(shapley_permutation(val, 200, seed=s) - exact))
        for s in range(50)
    )
    assert worst < 0.03


# --------------------------------------------------------------------------
# Closed vs complementary coalition values (exact tables agree)
# --------------------------------------------------------------------------


def _enum_model():
    joint = np.array(
        [
            [[0.05, 0.05], [0.10, 0.05]],
            [[0.10, 0.05], [0.05, 0.10]],
            [[0.05, 0.15], [0.10, 0.15]],
        ]
    )
    return DiscreteEnumerable(
        supports=[np.array([0.0, 1.0, 2.0]), np.array([0.0, 1.0]), np.array([0.0, 1.0])],
        joint=joint,
        output_fn=lambda row: float(row[0] + 2.0 * row[1] * row[2] - row[2]),
    )


def test_closed_and_complementary_tables_share_shapley_effects():
    model = _enum_model()
    spec = Gaussian(1.0)
    total = enum_mmd_total(model, spec)
    closed = {
        mask: enum_mmd_closed(model, spec, members(mask)) for mask in all_subsets(3)
    }
    compl = {
        mask: enum_complementary_closed(model, spec, members(mask))
        for mask in all_subsets(3)
    }
    eff_closed = shapley_exact(ValueFunction.from_table(3, closed, total, "mmd-closed"))
    eff_compl = shapley_exact(ValueFunction.from_table(3, compl, total, "mmd-compl"))
    assert np.allclose(eff_closed, eff_compl, atol=1e-10)
    assert eff_closed.sum() == pytest.approx(1.0, abs=1e-10)
    # the tables themselves differ away from the endpoints
    assert any(
        abs(closed[m] - compl[m]) > 1e-6 for m in all_subsets(3) if m not in (0, 7)
    )


# --------------------------------------------------------------------------
# Given-data MMD route
# --------------------------------------------------------------------------


def _mmd_report(fn, d, n, seed, **kwargs):
    rng = substream(seed, "shapley-data")
    x = rng.random((n, d))
    y = fn(x)
    sample = SampleSet(x=x, y=y)
    spec = Gaussian(kernels.median_heuristic(y))
    cfg = EstimatorConfig(n_I=30, seed=seed)
    return mmd_shapley(sample, spec, cfg, **kwargs)


def test_mmd_shapley_single_driver_dominates():
    report = _mmd_report(lambda x: x[:, 0], 2, 800, 21)
    assert report.effects[0] > 0.8
    assert report.effects.sum() == pytest.approx(1.0, abs=1e-9)
    assert report.method == "exact"


def test_mmd_shapley_exchangeable_inputs_symmetric():
    report = _mmd_report(lambda x: x[:, 0] + x[:, 1], 2, 1500, 22)
    assert abs(report.effects[0] - report.effects[1]) < 0.05


def test_mmd_shapley_dummy_input_near_zero():
    report = _mmd_report(lambda x: np.sin(3.0 * x[:, 0]) + x[:, 1], 3, 1500, 23)
    assert abs(report.effects[2]) < 0.05


def test_mmd_shapley_constant_output_refused():
    x = substream(24, "const").random((100, 2))
    sample = SampleSet(x=x, y=np.zeros(100))
    with pytest.raises(DegenerateOutputError):
        mmd_value_table(sample, Gaussian(1.0), EstimatorConfig())


def test_closed_route_also_aggregates():
    report = _mmd_report(lambda x: x[:, 0], 2, 600, 25, route="closed")
    assert report.kind == "mmd-closed"
    assert report.effects.sum() == pytest.approx(1.0, abs=1e-9)
    assert report.effects[0] > 0.7


# --------------------------------------------------------------------------
# HSIC route
# --------------------------------------------------------------------------


def test_hsic_shapley_single_driver():
    rng = substream(26, "hsic-shap")
    x = rng.random((500, 2))
    sample = SampleSet(x=x, y=x[:, 0].copy())
    in_spec = ProductZeroMean((SobolevZeroMean(1), SobolevZeroMean(1)))
    out_spec = Gaussian(kernels.median_heuristic(sample.y))
    report = hsic_shapley(sample, in_spec, out_spec, EstimatorConfig(seed=0))
    assert report.effects.sum() == pytest.approx(1.0, abs=1e-9)
    assert report.effects[0] > 0.9
    assert report.kind == "hsic-v"


def test_report_serializes_negative_effects_one_based():
    vals = {1: -0.1, 2: 1.05}
    val = ValueFunction.from_table(2, vals, normalizer=1.0, kind="test")
    effects = shapley_exact(val)
    report = ShapleyReport(
        effects=effects,
        normalizer=1.0,
        kind="test",
        method="exact",
        negative_effects=[l for l in range(2) if effects[l] < 0],
    )
    d = report.to_dict()
    assert d["negative_effects"] == [1]
    assert d["effects"][0] < 0
    assert sum(d["effects"]) == pytest.approx(1.0, abs=1e-12)
