import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from conftest import random_spd
from ggsmvif.errors import DimensionError, NotSPDError
from ggsmvif.mggd import (
    KurtosisClampWarning,
    MggdParams,
    covariance_factor,
    covariance_to_scatter,
    entropy,
    entropy_deficit,
    fisher_information,
    invert_kurtosis,
    kurtosis_infimum,
    log_pdf,
    mardia_kurtosis_closed_form,
    sample,
    scatter_to_covariance,
    score,
    shape_from_kurtosis,
)
from ggsmvif.oracle import mc_entropy

# Reference values from 30-digit quadrature of the radial integrals
# (mpmath), independent of the Gamma-function closed forms.
QUAD_KURTOSIS = {(3, 0.7): 2.82951816154249727987, (9, 0.6): 12.7875154662227358772, (2, 2.0): -1.71681469282041352307}
QUAD_COV_FACTOR = {(2, 0.6): 4.88515612190604949553, (9, 1.4): 0.406949984067841872420}
QUAD_ENTROPY_ISO = {(2, 0.7): 3.79923447566976930840, (9, 0.6): 23.4413416302041730694, (1, 0.5): 2.38629436111989061883}
QUAD_FIM_COEF = {(2, 0.7): 0.410877186834603984147, (9, 0.6): 0.0971881050233290736875}

shapes = st.floats(0.3, 4.0)
dims = st.integers(1, 9)


class TestParams:
    def test_rejects_bad_shape(self):
        with pytest.raises(ValueError):
            MggdParams(0.0, np.eye(2))

    def test_rejects_asymmetric_scatter(self):
        with pytest.raises(NotSPDError):
            MggdParams(1.0, np.array([[1.0, 0.1], [0.0, 1.0]]))

    def test_rejects_indefinite_scatter(self):
        with pytest.raises(NotSPDError):
            MggdParams(1.0, np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_dict_round_trip(self):
        p = MggdParams(0.7, np.array([[2.0, 0.3], [0.3, 1.0]]))
        q = MggdParams.from_dict(p.to_dict())
        assert q.shape == p.shape
        np.testing.assert_array_equal(q.scatter, p.scatter)


class TestLogPdf:
    def test_standard_normal_at_zero(self):
        assert log_pdf(MggdParams.isotropic(1, 1.0), np.zeros(1)) == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-14)

    def test_laplace_at_zero(self):
        assert log_pdf(MggdParams.isotropic(1, 0.5), np.zeros(1)) == pytest.approx(np.log(0.25), abs=1e-14)

    def test_matches_scipy_gaussian(self):
        rng = np.random.default_rng(3)
        cov = random_spd(4, rng)
        pts = rng.standard_normal((50, 4))
        ref = stats.multivariate_normal(np.zeros(4), cov).logpdf(pts)
        np.testing.assert_allclose(log_pdf(MggdParams(1.0, cov), pts), ref, rtol=1e-12)

    def test_matches_scipy_gennorm_in_one_dimension(self):
        # exp(-0.5 |x|^(2a)) is gennorm with beta = 2a and scale 2^(1/(2a))
        a = 0.7
        x = np.linspace(-4, 4, 41)
        ref = stats.gennorm(2 * a, scale=2 ** (1 / (2 * a))).logpdf(x)
        np.testing.assert_allclose(log_pdf(MggdParams.isotropic(1, a), x[:, None]), ref, rtol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            log_pdf(MggdParams.isotropic(2, 1.0), np.zeros(3))


class TestSample:
    def test_gaussian_covariance(self):
        x = sample(MggdParams.isotropic(2, 1.0), 10**6, seed=1)
        np.testing.assert_allclose(np.cov(x.T), np.eye(2), atol=5e-3)

    def test_radial_law(self):
        a = 0.6
        x = sample(MggdParams.isotropic(3, a), 10**6, seed=2)
        s = np.sum(x * x, axis=1) ** a
        ks = stats.kstest(s, stats.gamma(3 / (2 * a), scale=2.0).cdf).statistic
        assert ks < 0.002

    def test_deterministic(self):
        p = MggdParams(0.8, np.array([[1.0, 0.5], [0.5, 2.0]]))
        np.testing.assert_array_equal(sample(p, 100, seed=7), sample(p, 100, seed=7))
        assert not np.array_equal(sample(p, 100, seed=7), sample(p, 100, seed=8))

    def test_covariance_matches_scatter_conversion(self):
        p = MggdParams.isotropic(2, 0.6)
        x = sample(p, 10**6, seed=3)
        np.testing.assert_allclose(np.cov(x.T), scatter_to_covariance(p), atol=1e-2 * covariance_factor(2, 0.6))


class TestEntropy:
    def test_gaussian(self):
        assert entropy(MggdParams.isotropic(2, 1.0)) == pytest.approx(np.log(2 * np.pi * np.e), abs=1e-14)

    def test_laplace(self):
        assert entropy(MggdParams.isotropic(1, 0.5)) == pytest.approx(1 + np.log(4), abs=1e-14)

    @pytest.mark.parametrize("key", sorted(QUAD_ENTROPY_ISO))
    def test_against_quadrature(self, key):
        m, a = key
        assert entropy(MggdParams.isotropic(m, a)) == pytest.approx(QUAD_ENTROPY_ISO[key], rel=1e-12)

    def test_against_resubstitution(self):
        p = MggdParams(0.8, np.diag([1.0, 2.0, 3.0, 4.0]))
        assert mc_entropy(p, 10**6, seed=11).agrees_with(entropy(p))

    @given(dims, shapes, st.floats(0.01, 100.0))
    def test_scaling_law(self, m, a, s):
        p = MggdParams.isotropic(m, a)
        scaled = MggdParams(a, s * p.scatter)
        assert entropy(scaled) == pytest.approx(entropy(p) + 0.5 * m * np.log(s), rel=1e-12, abs=1e-12)

    def test_large_dimension_is_finite(self):
        assert np.isfinite(entropy(MggdParams.isotropic(64, 0.05)))


class TestFisher:
    @given(dims, st.integers(0, 10**6))
    def test_gaussian_is_inverse_scatter(self, m, seed):
        scatter = random_spd(m, np.random.default_rng(seed))
        fim = fisher_information(MggdParams(1.0, scatter))
        np.testing.assert_allclose(fim.matrix, np.linalg.inv(scatter), rtol=1e-12, atol=1e-12)

    def test_laplace(self):
        assert fisher_information(MggdParams.isotropic(1, 0.5)).trace == pytest.approx(0.25, abs=1e-14)

    @pytest.mark.parametrize("key", sorted(QUAD_FIM_COEF))
    def test_against_quadrature(self, key):
        m, a = key
        assert fisher_information(MggdParams.isotropic(m, a)).matrix[0, 0] == pytest.approx(QUAD_FIM_COEF[key], rel=1e-12)

    @pytest.mark.parametrize("m,a,finite", [(1, 0.25, False), (1, 0.2, False), (1, 0.26, True), (2, 0.01, True), (3, 0.3, True)])
    def test_finiteness_boundary(self, m, a, finite):
        fim = fisher_information(MggdParams.isotropic(m, a))
        assert fim.finite is finite
        assert (fim.matrix is None) is (not finite)
        if not finite:
            assert fim.trace == np.inf

    def test_transformation_law(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal((3, 3)) + 2 * np.eye(3)
        x = MggdParams(0.7, random_spd(3, rng))
        y = MggdParams(0.7, a @ x.scatter @ a.T)
        inv = np.linalg.inv(a)
        np.testing.assert_allclose(fisher_information(y).matrix, inv.T @ fisher_information(x).matrix @ inv, rtol=1e-10)
        # the sampled score of Y gives the same matrix; 4 SE since six entries are tested jointly
        g = score(y, sample(y, 4 * 10**5, seed=6))
        mc = g.T @ g / len(g)
        se = np.sqrt(np.var(g[:, :, None] * g[:, None, :], axis=0) / len(g))
        assert np.all(np.abs(mc - fisher_information(y).matrix) < 4 * se)

    def test_off_diagonal_vanishes_when_whitened(self):
        g = score(MggdParams.isotropic(4, 0.6), sample(MggdParams.isotropic(4, 0.6), 10**6, seed=8))
        prods = g[:, 0] * g[:, 1]
        assert abs(prods.mean()) < 3 * prods.std() / np.sqrt(len(prods))

    @pytest.mark.parametrize("a", [0.5, 0.8, 1.0, 1.5])
    @pytest.mark.parametrize("m", [1, 3, 9])
    def test_trace_j_sigma_at_least_dim(self, m, a):
        p = MggdParams(a, random_spd(m, np.random.default_rng(m)))
        value = np.trace(fisher_information(p).matrix @ scatter_to_covariance(p))
        if a == 1.0:
            assert value == pytest.approx(m, rel=1e-12)
        else:
            assert value > m * (1 + 1e-6)


class TestCovariance:
    def test_gaussian_factor_is_one(self):
        assert covariance_factor(5, 1.0) == 1.0

    @pytest.mark.parametrize("key", sorted(QUAD_COV_FACTOR))
    def test_against_quadrature(self, key):
        assert covariance_factor(*key) == pytest.approx(QUAD_COV_FACTOR[key], rel=1e-12)

    @given(dims, shapes, st.integers(0, 10**6))
    def test_round_trip(self, m, a, seed):
        scatter = random_spd(m, np.random.default_rng(seed))
        back = covariance_to_scatter(scatter_to_covariance(MggdParams(a, scatter)), a)
        np.testing.assert_allclose(back, scatter, rtol=1e-12, atol=1e-12)


class TestKurtosis:
    @pytest.mark.parametrize("m", [1, 2, 9, 64])
    def test_zero_for_gaussian(self, m):
        assert mardia_kurtosis_closed_form(m, 1.0) == 0.0

    def test_laplace(self):
        assert mardia_kurtosis_closed_form(1, 0.5) == pytest.approx(3.0, abs=1e-12)

    @pytest.mark.parametrize("key", sorted(QUAD_KURTOSIS))
    def test_against_quadrature(self, key):
        assert mardia_kurtosis_closed_form(*key) == pytest.approx(QUAD_KURTOSIS[key], rel=1e-12)

    @given(dims)
    def test_strictly_decreasing(self, m):
        grid = np.linspace(0.05, 10.0, 400)
        assert np.all(np.diff(mardia_kurtosis_closed_form(m, grid)) < 0)

    @given(dims)
    def test_above_infimum(self, m):
        assert mardia_kurtosis_closed_form(m, 10.0) > kurtosis_infimum(m) > -m * (m + 2)


class TestShapeFromKurtosis:
    def test_gaussian_fixed_point(self):
        assert shape_from_kurtosis(4, 0.0).shape == 1.0

    def test_laplace(self):
        assert shape_from_kurtosis(1, 3.0).shape == pytest.approx(0.5, abs=1e-8)

    @pytest.mark.parametrize("a", [0.3, 0.7, 1.5])
    @pytest.mark.parametrize("m", [1, 4, 9])
    def test_round_trip(self, m, a):
        est = shape_from_kurtosis(m, mardia_kurtosis_closed_form(m, a))
        assert est.shape == pytest.approx(a, abs=1e-8)
        assert not est.clamped

    def test_clamps_with_warning(self):
        with pytest.warns(KurtosisClampWarning):
            est = shape_from_kurtosis(2, 1e6)
        assert est.clamped and est.shape == 0.05
        with pytest.warns(KurtosisClampWarning):
            assert shape_from_kurtosis(2, -7.9).shape == 10.0

    def test_below_floor_is_an_error(self):
        with pytest.raises(ValueError):
            shape_from_kurtosis(2, -8.0)

    def test_vectorized_matches_scalar(self):
        targets = np.array([-1.0, 0.0, 2.0, 10.0])
        shapes_v, clamped = invert_kurtosis(3, targets)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            for t, a in zip(targets, shapes_v):
                assert shape_from_kurtosis(3, t).shape == pytest.approx(a, abs=1e-12)
        assert not clamped.any()


def test_entropy_deficit_is_non_positive():
    # a Gaussian maximizes entropy at fixed covariance
    grid = np.linspace(0.1, 5.0, 50)
    deficit = entropy_deficit(4, grid)
    assert np.all(deficit[grid != 1.0] < 0)
    assert entropy_deficit(4, 1.0) == 0.0
