"""Canonical Gibbs marginals, their moments, the flux and its convexity."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.special import logsumexp

from bricklayers import gibbs, rates
from bricklayers.gibbs import AdmissibilityError


def series_log_z(rf, theta, half_width=40):
    """Independent oracle: brute-force sum of exp(theta z) / r(|z|)! over |z| <= half_width."""
    z = np.arange(-half_width, half_width + 1)
    lf = rates.log_rate_factorials(rf, half_width)
    return float(logsumexp(theta * z - lf[np.abs(z)]))


class TestPartitionFunction:
    """Normalisers against direct series summation."""

    def test_beta1_theta0(self, ebl1):
        m = gibbs.build_marginal(ebl1, 0.0)
        np.testing.assert_allclose(math.exp(m.log_Z), 2.5066282880, rtol=1e-10)
        np.testing.assert_allclose(m.pmf_at(0), 0.39894228, rtol=1e-8)

    def test_beta2_theta0(self, ebl2):
        # 1 + 2 (e^-1 + e^-4 + e^-9 + ...) = 1.7726372048...
        np.testing.assert_allclose(math.exp(gibbs.log_partition(ebl2, 0.0)), 1.7726372048266523, rtol=1e-12)

    @pytest.mark.parametrize("theta", [-1.3, 0.0, 0.4, 2.2])
    def test_matches_series(self, ebl1, perturbed, theta):
        for rf in (ebl1, perturbed):
            np.testing.assert_allclose(gibbs.log_partition(rf, theta), series_log_z(rf, theta), rtol=0, atol=1e-13)

    @pytest.mark.parametrize("theta", [0.3, 1.1, 2.5])
    def test_even_in_theta(self, perturbed, theta):
        np.testing.assert_allclose(
            gibbs.log_partition(perturbed, theta), gibbs.log_partition(perturbed, -theta), atol=1e-13
        )

    def test_symmetric_at_zero(self, ebl1):
        m = gibbs.build_marginal(ebl1, 0.0)
        np.testing.assert_allclose(m.pmf, m.pmf[::-1], rtol=1e-14)

    def test_tail_bound_meets_target(self, ebl1, perturbed):
        for rf in (ebl1, perturbed):
            for theta in (-2.0, 0.0, 3.0):
                assert gibbs.build_marginal(rf, theta).tail_bound <= 1e-15

    def test_theta_beyond_table_rejected(self, perturbed):
        with pytest.raises(AdmissibilityError):
            gibbs.build_marginal(perturbed, 80.0)


class TestRatioIdentities:
    """r(z) mu(z) / mu(z - 1) = e^theta, the identity behind stationarity."""

    @pytest.mark.parametrize("theta", [-1.5, 0.0, 0.7, 2.0])
    def test_interior_ratios(self, ebl1, perturbed, theta):
        for rf in (ebl1, perturbed):
            m = gibbs.build_marginal(rf, theta)
            z = m.support[1:]
            log_ratio = rf.log_rate(z) + m.log_pmf(z) - m.log_pmf(z - 1)
            np.testing.assert_allclose(log_ratio, theta, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("theta", [-0.8, 0.0, 1.2])
    def test_expected_rates(self, perturbed, theta):
        m = gibbs.build_marginal(perturbed, theta)
        z = m.support
        np.testing.assert_allclose(m.expect(perturbed.rate(z)), math.exp(theta), rtol=1e-12)
        np.testing.assert_allclose(m.expect(perturbed.rate(-z)), math.exp(-theta), rtol=1e-12)


class TestEBLPeriodicity:
    """log Z = theta^2 / (2 beta) + log Z~(beta, theta / beta), Z~ of period one."""

    @pytest.mark.parametrize("m", [0.0, 0.3, 0.7])
    def test_z_tilde_period_one(self, m):
        for beta in (0.5, 1.0, 2.0):
            np.testing.assert_allclose(gibbs.log_z_tilde(beta, m), gibbs.log_z_tilde(beta, m + 1), atol=1e-9)

    @pytest.mark.parametrize("theta", [-0.6, 0.25, 1.4])
    def test_decomposition_matches_z_tilde(self, theta):
        rf = rates.make_ebl(2.0)
        quad, lzt = gibbs.ebl_partition_decomposition(rf, theta)
        np.testing.assert_allclose(quad, theta**2 / 4.0)
        np.testing.assert_allclose(lzt, gibbs.log_z_tilde(2.0, theta / 2.0), atol=1e-12)

    def test_decomposition_needs_ebl(self, perturbed):
        with pytest.raises(ValueError):
            gibbs.ebl_partition_decomposition(perturbed, 0.0)

    @pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("theta", [-1.0, 0.25, 0.9])
    def test_density_shift(self, beta, theta):
        rf = rates.make_ebl(beta)
        np.testing.assert_allclose(gibbs.mean_u(rf, theta + beta), gibbs.mean_u(rf, theta) + 1.0, atol=1e-8)

    def test_quarter_phase(self, ebl1):
        np.testing.assert_allclose(gibbs.mean_u(ebl1, 1.25) - gibbs.mean_u(ebl1, 0.25), 1.0, atol=1e-12)


class TestMoments:
    """u, u' = Var and u'' = third central moment."""

    def test_u_zero_at_zero(self, ebl1, perturbed):
        assert abs(gibbs.mean_u(ebl1, 0.0)) < 1e-15
        assert abs(gibbs.mean_u(perturbed, 0.0)) < 1e-15

    @pytest.mark.parametrize("theta", [-1.0, 0.0, 0.5, 1.7])
    def test_variance_is_derivative(self, perturbed, theta):
        h = 1e-4
        fd = (gibbs.mean_u(perturbed, theta + h) - gibbs.mean_u(perturbed, theta - h)) / (2 * h)
        np.testing.assert_allclose(gibbs.variance(perturbed, theta), fd, rtol=1e-6)

    @pytest.mark.parametrize("theta", [-1.0, 0.5, 1.7])
    def test_third_moment_is_second_derivative(self, perturbed, theta):
        h = 1e-4
        fd = (gibbs.variance(perturbed, theta + h) - gibbs.variance(perturbed, theta - h)) / (2 * h)
        np.testing.assert_allclose(gibbs.third_central(perturbed, theta), fd, rtol=1e-5)

    def test_moment_map_is_increasing(self, ebl1):
        mm = gibbs.MomentMap(ebl1, np.linspace(-2, 2, 21))
        assert np.all(np.diff(mm.u) > 0)
        np.testing.assert_allclose(mm.u_prime[10], gibbs.variance(ebl1, 0.0))


class TestInversionAndFlux:
    """theta(u), the flux J(u) = 2 cosh theta(u) and the shock speed."""

    def test_theta_of_zero(self, ebl1):
        assert abs(gibbs.theta_of_u(ebl1, 0.0)) < 1e-9

    @pytest.mark.parametrize("theta", [-2.5, -0.4, 0.9, 3.1])
    def test_round_trip(self, ebl1, perturbed, theta):
        for rf in (ebl1, perturbed):
            u = gibbs.mean_u(rf, theta)
            np.testing.assert_allclose(gibbs.theta_of_u(rf, u), theta, atol=1e-8)

    def test_flux_at_zero(self, ebl1):
        np.testing.assert_allclose(gibbs.flux_J(ebl1, 0.0), 2.0, rtol=1e-12)

    def test_flux_at_theta_one(self, ebl1):
        np.testing.assert_allclose(gibbs.flux_from_theta(ebl1, 1.0), 2 * math.cosh(1.0), rtol=1e-12)
        assert abs(gibbs.flux_from_theta(ebl1, 1.0) - 3.086161) < 1e-6

    def test_flux_for_perturbed_rates(self, perturbed):
        u = gibbs.mean_u(perturbed, 0.8)
        np.testing.assert_allclose(gibbs.flux_J(perturbed, u), 2 * math.cosh(0.8), rtol=1e-10)

    def test_rh_speed_example(self, ebl1):
        np.testing.assert_allclose(gibbs.rh_speed(ebl1, 1.0, 0.0), 2 * math.cosh(1.0) - 2.0, rtol=1e-12)
        np.testing.assert_allclose(gibbs.rh_speed(ebl1, 1.0, 0.0), 1.086161269630482, rtol=1e-12)

    def test_rh_speed_symmetric_pair(self):
        for beta in (0.5, 1.0, 2.0):
            rf = rates.make_ebl(beta)
            assert abs(gibbs.rh_speed(rf, beta / 2, -beta / 2)) < 1e-12

    def test_rh_speed_undefined_for_equal_states(self, ebl1):
        with pytest.raises(ZeroDivisionError):
            gibbs.rh_speed(ebl1, 0.3, 0.3)


class TestConvexity:
    """Second derivative of the flux in the density."""

    def test_value_at_zero(self, ebl1, perturbed):
        for rf in (ebl1, perturbed):
            np.testing.assert_allclose(gibbs.flux_convexity(rf, 0.0), 2.0 / gibbs.variance(rf, 0.0) ** 2, rtol=1e-14)

    @pytest.mark.parametrize("theta", [0.0, 0.5])
    def test_matches_finite_differences(self, ebl1, perturbed, theta):
        for rf in (ebl1, perturbed):
            u0, h = gibbs.mean_u(rf, theta), 1e-3
            j = [gibbs.flux_J(rf, u0 + k * h) for k in (-1, 0, 1)]
            fd = (j[0] - 2 * j[1] + j[2]) / h**2
            np.testing.assert_allclose(gibbs.flux_convexity(rf, theta), fd, rtol=1e-4)

    def test_ebl_interval_covers_scan(self, ebl1):
        assert gibbs.convexity_interval(ebl1, (-3.0, 3.0), 0.01) == (-3.0, 3.0)

    def test_interval_contains_zero(self, perturbed):
        lo, hi = gibbs.convexity_interval(perturbed, (-2.0, 2.0), 0.05)
        assert lo <= 0.0 <= hi

    def test_scan_range_must_contain_zero(self, ebl1):
        with pytest.raises(ValueError):
            gibbs.convexity_scan(ebl1, (0.5, 1.0))


class TestSampler:
    """Inverse-CDF sampling from the truncated marginal."""

    def test_mean_and_tv(self, ebl1, rng):
        m = gibbs.build_marginal(ebl1, 0.0)
        draws = m.sample(rng, 1_000_000)
        sigma = math.sqrt(m.variance / draws.size)
        assert abs(draws.mean()) < 4 * sigma
        counts = np.bincount(draws - m.z_min, minlength=len(m.support))
        tv = 0.5 * np.abs(counts / draws.size - m.pmf).sum()
        assert tv < 5e-3

    def test_never_leaves_support(self, ebl1, rng):
        m = gibbs.build_marginal(ebl1, 1.3)
        draws = m.sample(rng, 200_000)
        assert draws.min() >= m.z_min and draws.max() <= m.z_max

    def test_deterministic(self, ebl1):
        m = gibbs.build_marginal(ebl1, 0.2)
        a = m.sample(np.random.default_rng(3), 100)
        b = m.sample(np.random.default_rng(3), 100)
        np.testing.assert_array_equal(a, b)

    def test_extreme_uniforms(self, ebl1):
        m = gibbs.build_marginal(ebl1, 0.0)
        out = m.sample_from_uniform(np.array([0.0, 1.0 - 1e-17, 0.5]))
        assert out[0] == m.z_min and out[1] <= m.z_max and out[2] == 0
