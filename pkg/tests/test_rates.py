"""Rate functions: closed forms, validation, and document round trips."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bricklayers import rates
from bricklayers.rates import RateDomainError


class TestEBLClosedForm:
    """Direct evaluation of r(z) = exp(-beta/2 + beta z)."""

    def test_r0_beta1(self, ebl1):
        np.testing.assert_allclose(ebl1.rate(0), math.exp(-0.5), rtol=1e-15)
        assert abs(ebl1.rate(0) - 0.606531) < 1e-6

    def test_r0_times_r1_is_one(self, ebl1):
        np.testing.assert_allclose(ebl1.rate(0) * ebl1.rate(1), 1.0, rtol=1e-15)

    def test_r3_beta2(self, ebl2):
        np.testing.assert_allclose(ebl2.rate(3), math.exp(5.0), rtol=1e-14)
        assert abs(ebl2.rate(3) - 148.413) < 1e-3

    def test_vectorised_evaluation(self, ebl1):
        z = np.arange(-5, 6)
        np.testing.assert_allclose(ebl1.log_rate(z), -0.5 + z, rtol=0, atol=1e-14)

    def test_rejects_nonpositive_beta(self):
        with pytest.raises(ValueError):
            rates.make_ebl(0.0)
        with pytest.raises(ValueError):
            rates.make_ebl(-1.0)


class TestConsistencyAndMonotonicity:
    """r(z) r(1-z) = 1 and monotonicity, in the log domain."""

    @pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
    def test_ebl_consistency(self, beta):
        rf = rates.make_ebl(beta)
        z = np.arange(-30, 31)
        np.testing.assert_allclose(rf.log_rate(z) + rf.log_rate(1 - z), 0.0, atol=1e-12)
        assert np.all(np.diff(rf.log_rate(z)) >= 0)

    @pytest.mark.parametrize("n,factor", [(2, 1.1), (3, 1.5), (5, 1.01)])
    def test_perturbed_tables_stay_in_class(self, n, factor):
        rf = rates.perturbed_ebl(1.0, n=n, factor=factor)
        z = np.arange(rf.z_min, rf.z_max + 1)
        inside = (1 - z >= rf.z_min) & (1 - z <= rf.z_max)
        np.testing.assert_allclose(rf.log_rate(z[inside]) + rf.log_rate(1 - z[inside]), 0.0, atol=1e-12)
        assert np.all(np.diff(rf.log_table) >= 0)

    def test_tabulated_reproduces_ebl(self, ebl1):
        tab = rates.make_tabulated(rates.ebl_table_values(1.0, 40))
        z = np.arange(-39, 41)
        np.testing.assert_allclose(tab.log_rate(z), ebl1.log_rate(z), atol=1e-12)

    def test_perturbed_ratios(self, perturbed):
        e = math.e
        np.testing.assert_allclose(perturbed.rate(2) / perturbed.rate(1), 1.1 * e, rtol=1e-12)
        np.testing.assert_allclose(perturbed.rate(3) / perturbed.rate(2), e / 1.1, rtol=1e-12)

    def test_a1_below_one_rejected(self):
        with pytest.raises(ValueError, match="a_1"):
            rates.make_tabulated([0.9, 2.0, 3.0])

    def test_decreasing_table_rejected(self):
        with pytest.raises(ValueError, match="nondecreasing"):
            rates.make_tabulated([1.0, 3.0, 2.0])

    def test_out_of_table_lookup_raises(self, perturbed):
        with pytest.raises(RateDomainError):
            perturbed.rate(perturbed.z_max + 1)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(0.0, 3.0), min_size=2, max_size=12))
    def test_random_tables_consistent(self, increments):
        log_a = np.cumsum(increments)
        rf = rates.make_tabulated(log_a=log_a)
        z = np.arange(rf.z_min, rf.z_max + 1)
        inside = (1 - z >= rf.z_min) & (1 - z <= rf.z_max)
        np.testing.assert_allclose(rf.log_rate(z[inside]) + rf.log_rate(1 - z[inside]), 0.0, atol=1e-12)


class TestRateFactorial:
    """log r(n)! as a running sum and its EBL closed form beta n^2 / 2."""

    def test_empty_product(self, ebl1, perturbed):
        assert rates.log_rate_factorial(ebl1, 0) == 0.0
        assert rates.log_rate_factorial(perturbed, 0) == 0.0

    def test_ebl_beta1_n3(self, ebl1):
        np.testing.assert_allclose(rates.log_rate_factorial(ebl1, 3), 4.5, rtol=1e-14)

    def test_ebl_beta2_n1(self, ebl2):
        np.testing.assert_allclose(rates.log_rate_factorial(ebl2, 1), 1.0, rtol=1e-14)

    @pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
    def test_closed_form_matches_running_sums(self, beta):
        rf = rates.make_ebl(beta)
        n = np.arange(0, 41)
        np.testing.assert_allclose(rates.log_rate_factorials(rf, 40), beta * n**2 / 2, rtol=0, atol=1e-10)

    def test_negative_n_rejected(self, ebl1):
        with pytest.raises(ValueError):
            rates.log_rate_factorial(ebl1, -1)

    def test_past_table_raises(self, perturbed):
        with pytest.raises(RateDomainError):
            rates.log_rate_factorial(perturbed, perturbed.z_max + 1)


class TestThetaBar:
    """Limit of log r(n), and what a finite table can honestly say about it."""

    def test_ebl_infinite(self, ebl1):
        tb = rates.theta_bar(ebl1)
        assert tb.is_infinite and str(tb) == "+inf"

    def test_truncated_ebl_table_reports_lower_bound(self):
        rf = rates.make_tabulated(rates.ebl_table_values(1.0, 20))
        tb = rates.theta_bar(rf)
        assert tb.diverging
        np.testing.assert_allclose(float(tb), 19.5, rtol=1e-14)
        assert str(tb) == ">= 19.5, diverging"

    def test_bounded_table_reports_limit(self):
        rf = rates.make_tabulated([1.5, 2.0, 3.0, 3.0, 3.0, 3.0])
        tb = rates.theta_bar(rf)
        assert not tb.diverging
        np.testing.assert_allclose(float(tb), math.log(3.0))


class TestDocuments:
    """to_document / from_document round trips."""

    def test_ebl_round_trip(self, ebl2):
        back = rates.from_document(rates.to_document(ebl2))
        assert back.is_ebl and back.beta == 2.0
        np.testing.assert_array_equal(back.log_table, ebl2.log_table)

    def test_tabulated_round_trip(self, perturbed):
        back = rates.from_document(rates.to_document(perturbed))
        assert back.kind == "Tabulated"
        np.testing.assert_array_equal(back.log_table, perturbed.log_table)

    def test_tabulated_from_a_values(self):
        rf = rates.from_document({"kind": "Tabulated", "a": [1.0, 2.0, 4.0]})
        np.testing.assert_allclose(rf.rate(3), 4.0)
        np.testing.assert_allclose(rf.rate(-2), 0.25)

    def test_missing_kind(self):
        with pytest.raises(ValueError, match="kind"):
            rates.from_document({"beta": 1.0})

    def test_inconsistent_table_rejected(self):
        doc = {"kind": "Tabulated", "table": [[0, -0.5], [1, 0.6]]}
        with pytest.raises(ValueError, match="violated"):
            rates.from_document(doc)
