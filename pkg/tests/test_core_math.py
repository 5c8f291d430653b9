import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rupture_bnn.core_math import (
    DiagonalGaussian,
    DimensionError,
    RandomSource,
    bernoulli_log_likelihood,
    inverse_softplus,
    kl_diag_gaussian,
    relu,
    sample_reparameterized,
    sigmoid,
    softplus,
)


@pytest.mark.parametrize("x, expected", [(3.5, 3.5), (-3.0, 0.0), (0.0, 0.0)])
def test_relu(x, expected):
    assert relu(x) == expected


def test_relu_rejects_nan():
    with pytest.raises(ValueError):
        relu(np.nan)


def test_sigmoid_values():
    assert sigmoid(0.0) == 0.5
    tiny = sigmoid(-1000.0)
    assert 0.0 < tiny <= 1e-300
    assert sigmoid(1000.0) < 1.0
    x = np.linspace(-40, 40, 801)
    np.testing.assert_allclose(sigmoid(x) + sigmoid(-x), 1.0, atol=1e-12)


def test_sigmoid_no_overflow_warning():
    with np.errstate(over="raise"):
        sigmoid(np.array([-500.0, 500.0, -1e6, 1e6]))


def test_softplus_values():
    assert softplus(0.0) == pytest.approx(math.log(2), abs=1e-15)
    assert softplus(1000.0) == pytest.approx(1000.0)
    x = np.linspace(-20, 20, 4001)
    np.testing.assert_allclose(inverse_softplus(softplus(x)), x, atol=1e-9)
    assert np.all(np.diff(softplus(x)) > 0)


def test_activations_finite_on_wide_sweep():
    x = np.concatenate([-np.logspace(-6, 6, 200), [0.0], np.logspace(-6, 6, 200)])
    for f in (relu, sigmoid, softplus):
        assert not np.any(np.isnan(f(x)))
    assert np.all(softplus(x) > 0)


def test_diagonal_gaussian_validation():
    with pytest.raises(ValueError):
        DiagonalGaussian([0.0], [0.0])
    with pytest.raises(DimensionError):
        DiagonalGaussian([0.0, 1.0], [1.0])


def test_kl_examples():
    std = DiagonalGaussian.standard(5)
    assert kl_diag_gaussian(std, std) == 0.0
    assert kl_diag_gaussian(DiagonalGaussian([1.0], [1.0]), DiagonalGaussian([0.0], [1.0])) == 0.5
    with pytest.raises(DimensionError):
        kl_diag_gaussian(DiagonalGaussian.standard(2), DiagonalGaussian.standard(3))


def test_kl_matches_monte_carlo_log_ratio():
    q = DiagonalGaussian([0.0], [2.0])
    p = DiagonalGaussian([0.0], [1.0])
    x = sample_reparameterized(q, RandomSource(11).normal((10**6, 1)))
    ratio = q.log_density(x) - p.log_density(x)
    se = ratio.std(ddof=1) / math.sqrt(ratio.size)
    assert abs(kl_diag_gaussian(q, p) - ratio.mean()) < 3 * se
    # closed form: ln(1/2) + 4/2 - 1/2
    assert kl_diag_gaussian(q, p) == pytest.approx(1.5 - math.log(2), rel=1e-15)


gaussians = st.integers(1, 6).flatmap(lambda d: st.tuples(
    st.lists(st.floats(-5, 5), min_size=d, max_size=d),
    st.lists(st.floats(0.05, 5), min_size=d, max_size=d),
    st.lists(st.floats(-5, 5), min_size=d, max_size=d),
    st.lists(st.floats(0.05, 5), min_size=d, max_size=d),
))


@settings(max_examples=100, deadline=None)
@given(gaussians)
def test_kl_self_zero_and_nonnegative(params):
    m1, s1, m2, s2 = params
    q = DiagonalGaussian(m1, s1)
    p = DiagonalGaussian(m2, s2)
    assert kl_diag_gaussian(q, q) == pytest.approx(0.0, abs=1e-12)
    assert kl_diag_gaussian(q, p) >= -1e-12


def test_kl_additive_over_coordinates():
    rng = RandomSource(3)
    for _ in range(50):
        mq, mp = rng.normal(2), rng.normal(2)
        sq, sp = np.exp(rng.normal(2)), np.exp(rng.normal(2))
        joint = kl_diag_gaussian(DiagonalGaussian(mq, sq), DiagonalGaussian(mp, sp))
        parts = sum(kl_diag_gaussian(DiagonalGaussian(mq[i], sq[i]), DiagonalGaussian(mp[i], sp[i]))
                    for i in range(2))
        assert joint == pytest.approx(parts, abs=1e-12)


def test_reparameterized_sample_examples():
    g = DiagonalGaussian([1.0, -2.0, 0.5], [0.1, 2.0, 3.0])
    assert np.array_equal(sample_reparameterized(g, np.zeros(3)), g.mean)
    np.testing.assert_array_equal(sample_reparameterized(g, np.ones(3)), g.mean + g.stddev)
    with pytest.raises(DimensionError):
        sample_reparameterized(g, np.zeros(2))


def test_reparameterized_sample_moments():
    g = DiagonalGaussian([1.0, -2.0, 0.5], [0.1, 2.0, 3.0])
    n = 10**5
    x = sample_reparameterized(g, RandomSource(5).normal((n, 3)))
    assert np.all(np.abs(x.mean(axis=0) - g.mean) < 3 * g.stddev / math.sqrt(n))
    # standard error of a Gaussian sample std is sigma / sqrt(2(n-1))
    assert np.all(np.abs(x.std(axis=0, ddof=1) - g.stddev) < 3 * g.stddev / math.sqrt(2 * (n - 1)))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.floats(-4, 4))
def test_reparameterization_is_affine_in_noise(eps, a):
    g = DiagonalGaussian([0.3, -1.0, 2.0], [0.5, 1.5, 0.01])
    eps = np.array(eps)
    f0 = sample_reparameterized(g, np.zeros(3))
    lhs = sample_reparameterized(g, a * eps) - f0
    rhs = a * (sample_reparameterized(g, eps) - f0)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_bernoulli_log_likelihood():
    assert bernoulli_log_likelihood(1, 0.5) == pytest.approx(-0.693147, abs=1e-6)
    assert bernoulli_log_likelihood(0, 0.5) == pytest.approx(-0.693147, abs=1e-6)
    v = bernoulli_log_likelihood(1, 1.0)
    assert np.isfinite(v) and v == pytest.approx(-1e-7, rel=1e-6)
    assert np.isfinite(bernoulli_log_likelihood(1, 0.0))
    assert np.isfinite(bernoulli_log_likelihood(0, 1.0))


def test_random_source_reproducible():
    a = RandomSource(42, (3,)).normal(10**4)
    b = RandomSource(42, (3,)).normal(10**4)
    assert np.array_equal(a, b)


def test_random_source_children_differ_and_do_not_advance_parent():
    root = RandomSource(42)
    c0 = root.child(0).normal(1000)
    c1 = root.child(1).normal(1000)
    assert not np.array_equal(c0, c1)
    assert abs(np.corrcoef(c0, c1)[0, 1]) < 0.1
    assert np.array_equal(root.child(0).normal(1000), c0)
    assert np.array_equal(RandomSource(42).normal(5), root.normal(5))


def test_random_source_rejects_out_of_range():
    with pytest.raises(ValueError):
        RandomSource(-1)
    with pytest.raises(ValueError):
        RandomSource(1, (2**64,))
