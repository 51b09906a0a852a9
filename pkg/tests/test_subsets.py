"""Subset bookkeeping, inclusion-exclusion and index normalization."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgsa.errors import DegenerateOutputError, DomainError, IncompleteTableError
from kgsa.subsets import (
    ClosedValueTable,
    all_subsets,
    categorical_one_vs_all,
    complement,
    format_subset,
    members,
    mobius_combine,
    normalize,
    subset_of,
    subset_size,
)
from kgsa.testbed import ishigami_analytic


def test_mask_roundtrip_and_format():
    mask = subset_of([0, 2], 3)
    assert mask == 0b101
    assert members(mask) == (0, 2)
    assert subset_size(mask) == 2
    assert complement(mask, 3) == 0b010
    assert format_subset(mask) == "{1,3}"
    assert format_subset(0) == "{}"


def test_subset_of_rejects_out_of_range():
    with pytest.raises(DomainError):
        subset_of([3], 3)
    with pytest.raises(DomainError):
        subset_of([-1], 3)


def test_enumeration_cap():
    with pytest.raises(DomainError):
        all_subsets(25)


@given(st.integers(min_value=1, max_value=10), st.data())
@settings(max_examples=50, deadline=None)
def test_members_complement_partition(d, data):
    mask = data.draw(st.integers(min_value=0, max_value=(1 << d) - 1))
    got = set(members(mask)) | set(members(complement(mask, d)))
    assert got == set(range(d))
    assert subset_of(members(mask), d) == mask


def _table(d, values, total, budget=0.0):
    return ClosedValueTable(d=d, values=values, total=total, noise_budget=budget)


def test_mobius_two_input_interaction():
    table = _table(2, {0: 0.0, 1: 0.3, 2: 0.5, 3: 1.0}, total=1.0)
    terms = mobius_combine(table)
    assert terms[3] == pytest.approx(1.0 - 0.3 - 0.5, abs=1e-15)
    assert terms[1] == pytest.approx(0.3)
    assert terms[2] == pytest.approx(0.5)


def test_mobius_single_input_identity():
    table = _table(1, {0: 0.0, 1: 0.7}, total=0.7)
    assert mobius_combine(table)[1] == pytest.approx(0.7)


@given(st.lists(st.floats(min_value=0.01, max_value=2.0), min_size=3, max_size=3))
@settings(max_examples=40, deadline=None)
def test_mobius_additive_closed_values_have_no_interactions(v):
    d = 3
    values = {mask: sum(v[l] for l in members(mask)) for mask in all_subsets(d)}
    table = _table(d, values, total=sum(v))
    terms = mobius_combine(table)
    for mask in all_subsets(d):
        if subset_size(mask) >= 2:
            assert abs(terms[mask]) < 1e-12


def test_mobius_matches_bruteforce_alternating_sum():
    rng = np.random.default_rng(5)
    d = 4
    closed = {0: 0.0}
    for mask in all_subsets(d):
        if mask:
            closed[mask] = float(rng.random())
    full = (1 << d) - 1
    table = _table(d, closed, total=closed[full], budget=1e-9)
    terms = mobius_combine(table)
    for mask in all_subsets(d):
        brute = 0.0
        for sub in all_subsets(d):
            if sub & mask == sub:
                sign = (-1.0) ** (subset_size(mask) - subset_size(sub))
                brute += sign * closed[sub]
        assert terms[mask] == pytest.approx(brute, abs=1e-12)


def test_incomplete_table_names_missing_subset():
    table = _table(2, {0: 0.0, 1: 0.4, 3: 1.0}, total=1.0)
    with pytest.raises(IncompleteTableError) as err:
        mobius_combine(table)
    assert err.value.subset_members == (1,)
    assert "{2}" in str(err.value)  # inputs are named 1-based in messages


def test_table_validation():
    with pytest.raises(DomainError):
        _table(2, {0: 0.1}, total=1.0)
    with pytest.raises(DegenerateOutputError):
        _table(2, {0: 0.0}, total=0.0)
    with pytest.raises(DomainError):
        _table(2, {0: 0.0, 3: 1.5}, total=1.0)
    # a declared noise budget legitimizes small overshoot
    _table(2, {0: 0.0, 3: 1.0 + 1e-6}, total=1.0, budget=1e-3)


@given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=7, max_size=7))
@settings(max_examples=40, deadline=None)
def test_normalize_sums_to_one(raw):
    d = 3
    values = {0: 0.0}
    for mask, v in zip(range(1, 1 << d), raw):
        values[mask] = v
    values[(1 << d) - 1] = 2.0  # the total itself
    table = _table(d, values, total=2.0)
    report = normalize(table)
    assert sum(report.normalized.values()) == pytest.approx(1.0, abs=1e-10)


def test_normalize_total_index_consistency():
    rng = np.random.default_rng(11)
    d = 3
    values = {0: 0.0}
    for mask in range(1, 1 << d):
        values[mask] = float(rng.random())
    values[(1 << d) - 1] = 3.0
    table = _table(d, values, total=3.0)
    report = normalize(table)
    for l in range(d):
        from_subsets = sum(v for m, v in report.normalized.items() if m & (1 << l))
        assert report.total[l] == pytest.approx(from_subsets, abs=1e-10)
        expected = 1.0 - values[complement(1 << l, d)] / 3.0
        assert report.total[l] == pytest.approx(expected, abs=1e-12)


def test_normalize_flags_negative_terms():
    # superadditive pair forces a negative interaction for the singleton sums
    values = {0: 0.0, 1: 0.9, 2: 0.9, 3: 1.0}
    table = _table(2, values, total=1.0)
    report = normalize(table)
    assert 3 in report.negative_terms
    assert report.to_dict()["negative_terms"] == ["{1,2}"]


def test_normalize_ishigami_analytic_table():
    ana = ishigami_analytic()
    v1, v2, v13, v = ana["V1"], ana["V2"], ana["V13"], ana["V"]
    closed = {
        0: 0.0,
        0b001: v1,
        0b010: v2,
        0b100: 0.0,
        0b011: v1 + v2,
        0b101: v1 + v13,
        0b110: v2,
        0b111: v,
    }
    table = _table(3, closed, total=v)
    report = normalize(table)
    assert report.first_order[0] == pytest.approx(0.3139, abs=5e-4)
    assert report.first_order[1] == pytest.approx(0.4424, abs=5e-4)
    assert report.first_order[2] == pytest.approx(0.0, abs=1e-12)
    assert report.normalized[0b101] == pytest.approx(0.2437, abs=5e-4)
    assert report.total[2] == pytest.approx(0.2437, abs=5e-4)
    assert report.total[0] == pytest.approx(report.first_order[0] + 0.2437, abs=1e-3)


def test_one_vs_all_enumeration_oracle():
    # X uniform on two states; three output levels
    cond = np.array([[0.5, 0.3, 0.2], [0.2, 0.3, 0.5]])
    w = np.array([0.5, 0.5])
    # marginal (0.35, 0.3, 0.35): numerator 2 * 0.15^2 averaged, denominator
    # 0.35*0.65 + 0.3*0.7 + 0.35*0.65
    expected = 0.045 / 0.665
    assert categorical_one_vs_all(cond, w) == pytest.approx(expected, abs=1e-12)


def test_one_vs_all_independence_is_zero():
    cond = np.array([[0.3, 0.7], [0.3, 0.7], [0.3, 0.7]])
    w = np.array([0.2, 0.5, 0.3])
    assert categorical_one_vs_all(cond, w) == pytest.approx(0.0, abs=1e-15)


def test_one_vs_all_deterministic_balanced_binary():
    cond = np.array([[1.0, 0.0], [0.0, 1.0]])
    w = np.array([0.5, 0.5])
    assert categorical_one_vs_all(cond, w) == pytest.approx(1.0, abs=1e-12)


def test_one_vs_all_rejects_bad_probabilities():
    with pytest.raises(DomainError):
        categorical_one_vs_all(np.array([[0.5, 0.4]]), np.array([1.0]))
    with pytest.raises(DomainError):
        categorical_one_vs_all(np.array([[0.5, 0.5]]), np.array([0.7]))
    with pytest.raises(DegenerateOutputError):
        categorical_one_vs_all(np.array([[1.0, 0.0], [1.0, 0.0]]), np.array([0.5, 0.5]))
