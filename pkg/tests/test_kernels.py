"""Kernel evaluations against hand-computed values and structural laws."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgsa import kernels
from kgsa.data import Categorical, Curve, DistSample, Scalar
from kgsa.errors import (
    CapabilityError,
    DegenerateKernelError,
    DomainError,
    InfeasibleAlignmentError,
    VariantMismatchError,
)
from kgsa.kernels import (
    Dirac,
    DistributionEmbedding,
    DurrandeZeroMean,
    Gaussian,
    GlobalAlignment,
    Linear,
    ProductZeroMean,
    SobolevZeroMean,
    SteinZeroMean,
    WassersteinEmbedding,
    eval_kernel,
    global_alignment_kernel,
    gram,
    median_heuristic,
    mmd2,
    sobolev_kernel,
    verify_zero_mean,
    w2_squared,
)
from kgsa.marginals import Empirical, Normal, Uniform

RNG = np.random.default_rng(20240817)

unit = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)
reals = st.floats(min_value=-5.0, max_value=5.0, allow_nan=False)


# --------------------------------------------------------------------------
# Scalar kernels: hand values
# --------------------------------------------------------------------------


def test_eval_kernel_direct_formulas():
    assert eval_kernel(Gaussian(1.0), 0.0, 2.0) == pytest.approx(np.exp(-2.0))
    assert eval_kernel(Linear(), 1.5, -2.0) == -3.0
    assert eval_kernel(Dirac(4), 2, 2) == 1.0
    assert eval_kernel(Dirac(4), 1, 3) == 0.0


def test_sobolev_hand_values():
    # B1(x) = x - 1/2, B2(t) = t^2 - t + 1/6
    assert sobolev_kernel(0.5, 0.5) == pytest.approx(1.0 / 12.0, abs=1e-15)
    assert sobolev_kernel(0.0, 0.0) == pytest.approx(1.0 / 3.0, abs=1e-15)
    assert sobolev_kernel(0.0, 1.0) == pytest.approx(-1.0 / 6.0, abs=1e-15)


def test_sobolev_domain_and_order_errors():
    with pytest.raises(DomainError):
        sobolev_kernel(-0.1, 0.5)
    with pytest.raises(DomainError):
        sobolev_kernel(0.5, 1.2)
    with pytest.raises(DomainError):
        sobolev_kernel(0.5, 0.5, r=4)
    with pytest.raises(DomainError):
        SobolevZeroMean(r=0)


def test_stein_linear_closed_form():
    spec = SteinZeroMean(Linear())
    for x, y in [(0.0, 0.0), (0.3, -0.7), (2.0, 1.5)]:
        assert eval_kernel(spec, x, y) == pytest.approx((1 - x * x) * (1 - y * y), abs=1e-12)
    assert eval_kernel(spec, 1.0, 0.37) == pytest.approx(0.0, abs=1e-12)


def test_durrande_linear_uniform_degenerates():
    # projecting the linear kernel onto zero mean under U(0,1) kills the
    # whole (one-dimensional) RKHS, which must surface as an error
    spec = DurrandeZeroMean(Linear(), Uniform(0.0, 1.0))
    with pytest.raises(DegenerateKernelError):
        eval_kernel(spec, 0.3, 0.6)


def test_durrande_gaussian_diagonal_positive():
    spec = DurrandeZeroMean(Gaussian(1.0), Uniform(0.0, 1.0))
    assert eval_kernel(spec, 0.5, 0.5) > 0.0


def test_variant_mismatch_names_both_kinds():
    with pytest.raises(VariantMismatchError) as err:
        eval_kernel(Gaussian(1.0), Categorical(0, 2), Categorical(1, 2))
    assert "Gaussian" in str(err.value) and "Categorical" in str(err.value)
    with pytest.raises(VariantMismatchError):
        eval_kernel(Dirac(3), Scalar(0.5), Scalar(0.7))


def test_spec_validation():
    with pytest.raises(DegenerateKernelError):
        Gaussian(0.0)
    with pytest.raises(DegenerateKernelError):
        Dirac(1)
    with pytest.raises(DegenerateKernelError):
        DistributionEmbedding(sigma2=1.0, lam=0.0)
    with pytest.raises(DegenerateKernelError):
        WassersteinEmbedding(sigma2=-1.0)
    with pytest.raises(DegenerateKernelError):
        GlobalAlignment(bandwidth=0.0)
    with pytest.raises(DomainError):
        GlobalAlignment(bandwidth=1.0, band=-2)
    with pytest.raises(DegenerateKernelError):
        ProductZeroMean(())
    with pytest.raises(CapabilityError):
        DistributionEmbedding(inner=Dirac(3))


def test_dirac_rejects_undeclared_level():
    with pytest.raises(DomainError):
        eval_kernel(Dirac(2), 2, 0)


# --------------------------------------------------------------------------
# Gram assembly
# --------------------------------------------------------------------------


def test_gram_linear_outer_product():
    g = gram(Linear(), np.array([1.0, 2.0]))
    assert np.array_equal(g, np.array([[1.0, 2.0], [2.0, 4.0]]))


def test_gram_dirac_indicator():
    col = [Categorical(0, 2), Categorical(0, 2), Categorical(1, 2)]
    g = gram(Dirac(2), col)
    assert np.array_equal(g, np.array([[1, 1, 0], [1, 1, 0], [0, 0, 1]], dtype=float))


def test_gram_gaussian_unit_diagonal():
    g = gram(Gaussian(0.3), RNG.normal(size=17))
    assert np.allclose(np.diag(g), 1.0)
    assert np.array_equal(g, g.T)


@pytest.mark.parametrize(
    "spec,column",
    [
        (Linear(), RNG.normal(size=15)),
        (Gaussian(0.7), RNG.normal(size=15)),
        (SobolevZeroMean(1), RNG.random(15)),
        (SobolevZeroMean(2), RNG.random(15)),
        (DurrandeZeroMean(Gaussian(0.5), Uniform(0.0, 1.0)), RNG.random(15)),
        (SteinZeroMean(Gaussian(1.0)), RNG.normal(size=15)),
        (Dirac(3), [Categorical(int(v), 3) for v in RNG.integers(0, 3, 15)]),
        (
            DistributionEmbedding(1.0, 0.5, Gaussian(1.0)),
            [DistSample(RNG.normal(loc=m, size=30)) for m in RNG.normal(size=10)],
        ),
        (
            GlobalAlignment(bandwidth=1.0),
            [Curve(np.arange(8.0), RNG.normal(size=8)) for _ in range(10)],
        ),
    ],
)
def test_gram_symmetric_and_psd(spec, column):
    g = gram(spec, column)
    n = g.shape[0]
    # quadrature-backed kernels can differ in the last bits across the
    # diagonal; anything beyond that is a real asymmetry
    assert np.allclose(g, g.T, rtol=0.0, atol=1e-12)
    eigs = np.linalg.eigvalsh(g)
    assert eigs.min() >= -n * 1e-10


@given(st.lists(reals, min_size=1, max_size=6), st.lists(reals, min_size=1, max_size=6))
@settings(max_examples=30, deadline=None)
def test_eval_kernel_symmetry(xs, ys):
    x = np.asarray(xs[0])
    y = np.asarray(ys[0])
    for spec in (Linear(), Gaussian(0.8), SteinZeroMean(Linear())):
        assert eval_kernel(spec, x, y) == eval_kernel(spec, y, x)
    a = DistSample(np.asarray(xs))
    b = DistSample(np.asarray(ys))
    spec = WassersteinEmbedding(1.0, 1.0)
    assert eval_kernel(spec, a, b) == eval_kernel(spec, b, a)


@given(st.lists(unit, min_size=2, max_size=2), st.lists(unit, min_size=2, max_size=2))
@settings(max_examples=30, deadline=None)
def test_product_zero_mean_expansion(xa, xb):
    """prod(1 + k_l) - 1 equals the sum of bare products over subsets."""
    factors = (SobolevZeroMean(1), SobolevZeroMean(2))
    spec = ProductZeroMean(factors)
    a = np.asarray(xa)
    b = np.asarray(xb)
    k = [float(kernels.eval_kernel(f, a[l], b[l])) for l, f in enumerate(factors)]
    expansion = k[0] + k[1] + k[0] * k[1]
    assert eval_kernel(spec, a, b) - 1.0 == pytest.approx(expansion, abs=1e-10)


# --------------------------------------------------------------------------
# MMD between columns
# --------------------------------------------------------------------------


def test_mmd2_identical_samples_zero():
    v = RNG.normal(size=20)
    assert mmd2(Gaussian(1.0), v, v) == pytest.approx(0.0, abs=1e-12)


def test_mmd2_linear_hand_value():
    # means 1.5 and 4, so the linear-kernel MMD^2 is (1.5 - 4)^2
    assert mmd2(Linear(), [1.0, 2.0], [3.0, 5.0]) == pytest.approx(6.25, abs=1e-12)


def test_mmd2_dirac_disjoint_levels():
    p = [Categorical(0, 2)] * 3
    q = [Categorical(1, 2)] * 4
    assert mmd2(Dirac(2), p, q) == pytest.approx(2.0, abs=1e-12)


@given(
    st.lists(reals, min_size=2, max_size=8),
    st.lists(reals, min_size=2, max_size=8),
)
@settings(max_examples=40, deadline=None)
def test_mmd2_linear_is_squared_mean_gap(p, q):
    p = np.asarray(p)
    q = np.asarray(q)
    assert mmd2(Linear(), p, q) == pytest.approx((p.mean() - q.mean()) ** 2, abs=1e-12)


def test_mmd2_nonnegative_for_psd_kernels():
    for _ in range(5):
        p = RNG.normal(size=12)
        q = RNG.normal(loc=0.5, size=9)
        assert mmd2(Gaussian(0.6), p, q) >= -1e-12


def test_mmd2_unbiased_needs_two_points():
    with pytest.raises(DegenerateKernelError):
        mmd2(Gaussian(1.0), [1.0], [2.0, 3.0], unbiased=True)


# --------------------------------------------------------------------------
# Global alignment kernel
# --------------------------------------------------------------------------


def _curve(values):
    values = np.asarray(values, dtype=float)
    return Curve(np.arange(values.size, dtype=float), values)


def test_gak_identical_curves_exactly_one():
    a = _curve(RNG.normal(size=12))
    assert global_alignment_kernel(a, a, bandwidth=0.8) == pytest.approx(1.0, abs=1e-12)
    single = _curve([0.4])
    assert global_alignment_kernel(single, single, bandwidth=1.0) == 1.0


def test_gak_symmetric_and_bounded():
    a = _curve(RNG.normal(size=10))
    b = _curve(RNG.normal(size=13))
    kab = global_alignment_kernel(a, b, bandwidth=1.0)
    kba = global_alignment_kernel(b, a, bandwidth=1.0)
    assert kab == pytest.approx(kba, abs=1e-12)
    assert 0.0 < kab <= 1.0


def test_gak_band_infeasible():
    a = _curve(np.zeros(10))
    b = _curve(np.zeros(3))
    with pytest.raises(InfeasibleAlignmentError):
        global_alignment_kernel(a, b, bandwidth=1.0, band=2)


def test_gak_gram_matches_pairwise_eval():
    curves = [_curve(RNG.normal(size=7)) for _ in range(6)]
    spec = GlobalAlignment(bandwidth=0.9)
    g = gram(spec, curves)
    for i in range(6):
        for j in range(6):
            assert g[i, j] == pytest.approx(eval_kernel(spec, curves[i], curves[j]), abs=1e-10)


# --------------------------------------------------------------------------
# Wasserstein coupling
# --------------------------------------------------------------------------


def test_w2_equal_sizes_sorted_pairing():
    assert w2_squared([1.0, 0.0], [3.0, 2.0]) == pytest.approx(4.0, abs=1e-14)


def test_w2_unequal_sizes_quantile_coupling():
    # quantile functions: p jumps at 1/2, q constant; integrate by segments
    val = w2_squared([0.0, 1.0], [0.5])
    assert val == pytest.approx(0.25, abs=1e-12)


@given(st.lists(reals, min_size=1, max_size=9), st.lists(reals, min_size=1, max_size=9))
@settings(max_examples=40, deadline=None)
def test_w2_metric_axioms(p, q):
    p = np.asarray(p)
    q = np.asarray(q)
    assert w2_squared(p, p) == pytest.approx(0.0, abs=1e-12)
    assert w2_squared(p, q) == pytest.approx(w2_squared(q, p), abs=1e-12)
    assert w2_squared(p, q) >= -1e-15


# --------------------------------------------------------------------------
# Median heuristic
# --------------------------------------------------------------------------


def test_median_heuristic_hand_enumeration():
    assert median_heuristic(np.array([0.0, 1.0, 3.0])) == 2.0
    # even count of pairwise distances {0, 1, 1}: lower median
    assert median_heuristic(np.array([0.0, 0.0, 1.0])) == 1.0


def test_median_heuristic_degenerate():
    with pytest.raises(DegenerateKernelError):
        median_heuristic(np.array([5.0, 5.0, 5.0]))


def test_median_heuristic_mmd_metric():
    bags = [DistSample(RNG.normal(loc=m, size=25)) for m in (0.0, 1.0, 3.0)]
    med = median_heuristic(bags, metric="mmd", inner=Gaussian(1.0))
    vals = sorted(
        mmd2(Gaussian(1.0), bags[i].values, bags[j].values)
        for i, j in [(0, 1), (0, 2), (1, 2)]
    )
    assert med == pytest.approx(vals[1], abs=1e-12)


def test_median_heuristic_curves_need_shared_grid():
    a = Curve(np.array([0.0, 1.0]), np.array([0.0, 1.0]))
    b = Curve(np.array([0.0, 2.0]), np.array([0.0, 1.0]))
    with pytest.raises(DomainError):
        median_heuristic([a, b])


# --------------------------------------------------------------------------
# Zero-mean verification
# --------------------------------------------------------------------------


def _zero_mean_within_mc_error(spec, marginal, mc_n=100_000):
    """Per-probe |MC mean| must stay within 3 standard errors of zero."""
    rng = np.random.default_rng(99)
    draws = marginal.sample(mc_n, rng)
    probes = marginal.sample(8, rng)
    for x in probes:
        vals = kernels.row_kernel(spec, np.full(mc_n, x), draws)
        se = vals.std(ddof=1) / np.sqrt(mc_n)
        assert abs(vals.mean()) <= 3.0 * se + 1e-12, (spec, x)


def test_zero_mean_sobolev_under_uniform():
    _zero_mean_within_mc_error(SobolevZeroMean(1), Uniform(0.0, 1.0))
    _zero_mean_within_mc_error(SobolevZeroMean(2), Uniform(0.0, 1.0))


def test_zero_mean_durrande_under_its_marginal():
    _zero_mean_within_mc_error(DurrandeZeroMean(Gaussian(1.0), Uniform(0.0, 1.0)), Uniform(0.0, 1.0))
    _zero_mean_within_mc_error(DurrandeZeroMean(Gaussian(0.8), Normal(0.0, 1.0)), Normal(0.0, 1.0))
    emp = Empirical(tuple(np.random.default_rng(3).normal(size=40)))
    _zero_mean_within_mc_error(DurrandeZeroMean(Gaussian(1.0), emp), emp)


def test_zero_mean_stein_under_standard_normal():
    _zero_mean_within_mc_error(SteinZeroMean(Linear()), Normal(0.0, 1.0))
    _zero_mean_within_mc_error(SteinZeroMean(Gaussian(1.0)), Normal(0.0, 1.0))


def test_verify_zero_mean_negative_control():
    worst = verify_zero_mean(Gaussian(1.0), Uniform(0.0, 1.0), mc_n=20_000)
    assert worst > 0.1


def test_verify_zero_mean_sobolev_small():
    worst = verify_zero_mean(SobolevZeroMean(1), Uniform(0.0, 1.0), mc_n=100_000)
    assert worst < 5e-3
