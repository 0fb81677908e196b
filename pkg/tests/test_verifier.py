"""Exact stationarity checks: residuals, their three independent routes, and scans."""

from __future__ import annotations

import math

import numpy as np
import pytest

from bricklayers import rates
from bricklayers import verifier as V
from bricklayers.verifier import CylinderFunction, ThetaProfile, Verdict

THEOREM = ThetaProfile(1.0, 0.0)
PAIR = CylinderFunction.indicator((1, 0), -1)


def corrupted_rates():
    """EBL beta = 1 table with log r(2) raised by 0.1 and r(-1) left alone.

    This breaks r(z) r(1 - z) = 1, so the constructor would refuse it; the
    dataclass is assembled by hand to see the verifier notice.
    """
    table = np.arange(-20, 21) - 0.5
    table[22] += 0.1  # z = 2
    rf = object.__new__(rates.RateFunction)
    object.__setattr__(rf, "kind", "Tabulated")
    object.__setattr__(rf, "z_min", -20)
    object.__setattr__(rf, "log_table", table)
    object.__setattr__(rf, "beta", None)
    return rf


def random_phi(rng, start, width, v=3):
    return CylinderFunction(start, rng.normal(size=(2 * v + 1,) * width), label="random")


class TestCylinderFunctions:
    """Bounded test functions on a finite window."""

    def test_indicator(self):
        assert PAIR.window == (-1, 0) and PAIR.width == 2
        np.testing.assert_array_equal(PAIR(np.array([[1, 0], [0, 1], [9, 0]])), [1.0, 0.0, 0.0])

    def test_default_outside_table(self):
        phi = CylinderFunction(0, np.zeros((3,)), default=2.5)
        np.testing.assert_array_equal(phi(np.array([[0], [4]])), [0.0, 2.5])
        assert phi.sup_abs == 2.5

    def test_from_function(self):
        phi = CylinderFunction.from_function(lambda a, b: a - b, -1, 2, 2)
        np.testing.assert_array_equal(phi(np.array([[2, -1], [0, 0]])), [3.0, 0.0])

    def test_validation(self):
        with pytest.raises(ValueError):
            CylinderFunction(0, np.zeros((4, 4)))
        with pytest.raises(ValueError):
            CylinderFunction(0, np.full((3,), np.inf))

    def test_default_basis_size(self):
        basis = V.default_basis()
        assert len(basis) == 7 + 49 + 49 + 343
        assert {b.window for b in basis} == {(0, 0), (-1, 0), (0, 1), (-1, 1)}


class TestThetaProfile:
    def test_theorem_profile(self):
        p = ThetaProfile.theorem(1.3, 1.0)
        assert p.theta(-1) == 1.3 and math.isclose(p.theta(0), 0.3)
        assert p.change_points() == [0]

    def test_overrides(self):
        p = ThetaProfile(0.5, 0.5, ((2, 0.1),))
        assert p.theta(2) == 0.1 and p.change_points() == [2, 3]
        assert ThetaProfile.uniform(0.2).change_points() == []

    def test_finite(self):
        with pytest.raises(ValueError):
            ThetaProfile(math.inf, 0.0)


class TestTranslationInvariant:
    """E[L phi] = 0 under the i.i.d. Gibbs measure."""

    def test_constant_is_exactly_zero(self, ebl1):
        rep = V.translation_invariant_residual(ebl1, 0.4, CylinderFunction.constant(3.0))
        assert rep.residual == 0.0 and rep.verdict is Verdict.CONSISTENT_WITH_ZERO

    def test_single_site_indicator(self, ebl1):
        rep = V.translation_invariant_residual(ebl1, 0.3, CylinderFunction.indicator((0,), 0), m=10)
        assert abs(rep.residual) < 1e-10
        # the M = 14 sum confirms the M = 10 one
        rep14 = V.translation_invariant_residual(ebl1, 0.3, CylinderFunction.indicator((0,), 0), m=14)
        assert abs(rep.residual - rep14.residual) < 1e-10

    def test_perturbed_rates_stay_stationary(self, perturbed):
        rep = V.translation_invariant_basis(perturbed, 0.6, m=10)
        assert rep.max_abs < 1e-10 and rep.verdict is Verdict.CONSISTENT_WITH_ZERO

    def test_corrupted_rates_detected(self):
        rep = V.translation_invariant_basis(corrupted_rates(), 0.0, m=10)
        assert rep.max_abs > 1e-3
        assert rep.verdict is Verdict.NON_ZERO

    def test_agrees_with_dense_enumeration(self, ebl1, rng):
        for _ in range(3):
            phi = random_phi(rng, 0, 2)
            fast = V.translation_invariant_residual(ebl1, -0.7, phi, m=10).residual
            dense = V.dense_residual(ebl1, ThetaProfile.uniform(-0.7), phi, 10, kind="lattice")
            np.testing.assert_allclose(fast, dense, atol=1e-13)


class TestTracerResidual:
    """E[L_frame phi] under the two-sided product measure."""

    def test_theorem_pair(self, ebl1):
        rep = V.tracer_residual(ebl1, THEOREM, PAIR, m=12)
        assert abs(rep.residual) < 1e-8 and rep.verdict is Verdict.CONSISTENT_WITH_ZERO

    def test_diagonal_is_not_stationary(self, ebl1):
        rep = V.tracer_residual(ebl1, ThetaProfile.uniform(0.5), PAIR, m=12)
        assert abs(rep.residual) > 1e-3 and rep.verdict is Verdict.NON_ZERO
        np.testing.assert_allclose(abs(rep.residual), 0.2523, atol=5e-4)

    def test_constant_is_exactly_zero(self, ebl1):
        assert V.tracer_residual(ebl1, ThetaProfile(0.3, -1.0), CylinderFunction.constant(1.0)).residual == 0.0

    def test_basis_at_theorem_pair(self, ebl1):
        rep = V.tracer_basis(ebl1, THEOREM, m=12)
        assert rep.max_abs < 1e-8 and rep.verdict is Verdict.CONSISTENT_WITH_ZERO
        assert rep.report(rep.worst).basis == rep.labels[rep.worst]

    def test_theorem_line_for_other_beta(self):
        rf = rates.make_ebl(2.0)
        rep = V.tracer_basis(rf, ThetaProfile.theorem(0.4, 2.0), m=12)
        assert rep.verdict is Verdict.CONSISTENT_WITH_ZERO

    def test_truncation_convergence(self, ebl1):
        """The residual stays below its tail bound and shrinks with it as M grows."""
        reps = {m: V.tracer_residual(ebl1, THEOREM, PAIR, m) for m in (3, 4, 5, 6, 7, 8)}
        for rep in reps.values():
            assert abs(rep.residual) <= rep.tail_bound
        for m in (3, 4):
            shrink = abs(reps[m + 4].residual) / abs(reps[m].residual)
            tail_ratio = reps[m + 4].tail_bound / reps[m].tail_bound
            assert shrink <= 2 * tail_ratio
        np.testing.assert_allclose(reps[6].residual, 6.435516693714671e-07, rtol=1e-8)


class TestThreeRoutes:
    """Factorised sums, literal enumeration and the A+B+C+D form agree.

    The routes truncate on slightly different boxes (the factorised sum
    shifts the box with each move), so they are compared at M = 10 where the
    truncation tail is below 1e-17.
    """

    @pytest.mark.parametrize(
        "profile", [THEOREM, ThetaProfile.uniform(0.5), ThetaProfile(0.2, -0.9), ThetaProfile(1.0, 0.0, ((1, 0.4),))]
    )
    def test_random_phi(self, ebl1, rng, profile):
        for start, width in ((-1, 2), (0, 2)):
            phi = random_phi(rng, start, width)
            fast = V.tracer_residual(ebl1, profile, phi, m=10).residual
            dense = V.dense_residual(ebl1, profile, phi, 10)
            abcd = V.abcd_expectation(ebl1, profile, phi, 10)
            np.testing.assert_allclose(fast, dense, atol=1e-12)
            np.testing.assert_allclose(abcd, dense, atol=1e-9)

    def test_perturbed_rates(self, perturbed, rng):
        phi = random_phi(rng, -1, 2)
        prof = ThetaProfile(0.7, -0.2)
        dense = V.dense_residual(perturbed, prof, phi, 10)
        np.testing.assert_allclose(V.tracer_residual(perturbed, prof, phi, 10).residual, dense, atol=1e-12)
        np.testing.assert_allclose(V.abcd_expectation(perturbed, prof, phi, 10), dense, atol=1e-9)

    def test_truncation_sized_disagreement_at_small_box(self, ebl1, rng):
        phi = random_phi(rng, -1, 2)
        fast = V.tracer_residual(ebl1, THEOREM, phi, m=6)
        dense = V.dense_residual(ebl1, THEOREM, phi, 6)
        assert abs(fast.residual - dense) <= 2 * fast.tail_bound

    def test_dense_budget(self, ebl1):
        with pytest.raises(V.BudgetError):
            V.dense_residual(ebl1, THEOREM, CylinderFunction.indicator((0, 0, 0), -1), 20)


class TestABCDTerms:
    """Terms of the stationarity equation after eliminating the marginals."""

    def test_z_ratio_on_theorem_line(self, ebl1, ebl2):
        for rf, beta in ((ebl1, 1.0), (ebl2, 2.0)):
            for theta_r in (-0.5, 0.0, 0.8):
                np.testing.assert_allclose(
                    V.z_ratio(rf, theta_r + beta, theta_r), math.exp(beta / 2 + theta_r), rtol=1e-12
                )

    def test_uniform_profile_reductions(self, ebl1):
        w = V.SlopeWindow(-2, np.array([[0, 1, -1, 2], [3, -2, 0, 0]]))
        _, _, C, D = V.abcd_terms(ebl1, ThetaProfile.uniform(0.4), w)
        np.testing.assert_allclose(C, (1 - math.exp(-1)) * ebl1.rate(-w[0]), rtol=1e-13)
        np.testing.assert_allclose(D, (math.e - 1) * ebl1.rate(w[-1]), rtol=1e-13)

    def test_window_must_cover_change_points(self, ebl1):
        with pytest.raises(ValueError):
            V.abcd_terms(ebl1, ThetaProfile(0.0, 0.0, ((4, 1.0),)), V.SlopeWindow(-2, np.zeros(4, dtype=int)))


class TestScans:
    """Locating the stationary pairs by scanning theta."""

    def test_small_theorem_scan(self, ebl1):
        grid = np.linspace(-1.0, 1.0, 5)
        scan = V.theorem_scan(ebl1, grid, m=10)
        assert scan.max_residual.shape == (5, 5)
        tl, tr = scan.argmin
        assert abs((tl - tr) - 1.0) < 1e-12
        hits = [(a, b) for a, b, _ in scan.rows() if scan.consistent[list(grid).index(a), list(grid).index(b)]]
        assert hits and all(abs(a - b - 1.0) < 1e-12 for a, b in hits)

    def test_line_scan_recovers_beta(self, ebl1, ebl2):
        offsets = np.arange(0.0, 3.01, 0.25)
        assert V.line_scan(ebl1, 0.5, offsets, m=10).best_offset == 1.0
        assert V.line_scan(ebl2, 0.5, offsets, m=10).best_offset == 2.0

    def test_diagonal_has_no_stationary_point(self, ebl1):
        diag = V.diagonal_scan(ebl1, np.linspace(-2, 2, 9), m=10)
        assert not diag.consistent.any() and diag.max_residual.min() > 1e-3

    def test_perturbed_rates_have_no_stationary_pair(self, perturbed):
        grid = np.linspace(-1.5, 1.5, 7)
        scan = V.theorem_scan(perturbed, grid, m=10)
        assert not scan.any_consistent and scan.minimum > 1e-3
