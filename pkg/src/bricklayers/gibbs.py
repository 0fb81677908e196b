"""Canonical Gibbs measures of the bricklayers' models and their hydrodynamics.

The one-site measure has weights ``exp(theta*z) / r(|z|)!``. Everything below
is honest truncated summation: each marginal carries a support chosen so that
a geometric bound on the discarded mass stays below ``tail_target``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from .rates import RateFunction, log_rate_factorials, theta_bar

DEFAULT_TAIL_TARGET = 1e-15

#: Log-weight slack (in nats) used when sizing the EBL scratch range.
_EBL_SCRATCH_NATS = 40.0


class AdmissibilityError(ValueError):
    """theta outside (-theta_bar, theta_bar), or the tail target is unreachable."""


@dataclass(frozen=True, eq=False)
class GibbsMarginal:
    """Truncated one-site measure ``mu^(theta)`` on ``[z_min, z_max]``.

    ``log_Z`` is the log-sum-exp of the retained weights, so ``pmf`` sums to
    one; the true normaliser exceeds it by a relative amount of at most
    ``tail_bound``.
    """

    rf: RateFunction
    theta: float
    z_min: int
    z_max: int
    log_weight: np.ndarray = field(repr=False)
    log_Z: float
    tail_bound: float

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.z_min, self.z_max + 1)

    @property
    def pmf(self) -> np.ndarray:
        return np.exp(self.log_weight - self.log_Z)

    def log_pmf(self, z):
        """Log probability at arbitrary integers, including outside the support.

        Values outside the support use the same normaliser; they are the
        (untruncated) Gibbs weights, handy for tail accounting.
        """
        z = np.asarray(z)
        lf = log_rate_factorials(self.rf, int(np.max(np.abs(z))) if z.size else 0)
        out = self.theta * z - lf[np.abs(z)] - self.log_Z
        return float(out) if out.ndim == 0 else out

    def pmf_at(self, z):
        return np.exp(self.log_pmf(z))

    def expect(self, values) -> float:
        """Expectation of ``values`` (array over the support, or a callable of z)."""
        if callable(values):
            values = values(self.support)
        return float(np.dot(self.pmf, values))

    @property
    def mean(self) -> float:
        return self.expect(self.support.astype(float))

    @property
    def variance(self) -> float:
        d = self.support - self.mean
        return self.expect(d * d)

    @property
    def third_central(self) -> float:
        d = self.support - self.mean
        return self.expect(d * d * d)

    @property
    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.pmf)
        c[-1] = 1.0
        return c

    def sample(self, rng: np.random.Generator, size=None):
        """Inverse-CDF draws; never leaves the support."""
        u = rng.random(size)
        idx = np.searchsorted(self.cdf, u, side="right")
        idx = np.minimum(idx, self.z_max - self.z_min)
        out = self.z_min + idx
        return int(out) if size is None else out.astype(np.int64)

    def sample_from_uniform(self, u):
        """Deterministic inverse CDF of given uniforms (used by the kernels)."""
        idx = np.minimum(np.searchsorted(self.cdf, u, side="right"), self.z_max - self.z_min)
        return self.z_min + idx


def admissible_theta_box(rf: RateFunction, cap: float = 4.0) -> float:
    """Half-width of the default scan box, ``min(theta_bar - 0.5, cap)``."""
    tb = float(theta_bar(rf))
    return min(tb - 0.5, cap)


def _check_theta(rf: RateFunction, theta: float) -> None:
    if not np.isfinite(theta):
        raise AdmissibilityError(f"theta must be finite, got {theta}")
    tb = theta_bar(rf)
    if not tb.diverging and abs(theta) >= tb.value:
        raise AdmissibilityError(f"|theta| = {abs(theta)} is not below theta_bar = {tb}")


def _scratch_bound(rf: RateFunction, theta: float, tail_target: float) -> int:
    if rf.is_ebl:
        slack = -math.log(tail_target) + _EBL_SCRATCH_NATS
        return int(math.ceil(abs(theta) / rf.beta + math.sqrt(2.0 * slack / rf.beta))) + 2
    # r(|z| + 1) must stay tabulated for tail ratios and shifted expectations
    return rf.z_max - 2


def _geometric_tails(rf, theta, z, lw):
    """Log of the geometric tail bound beyond each right/left cut point.

    Right of ``n >= 0`` the weight ratio is ``exp(theta) / r(z+1) <= exp(theta) / r(n+1)``
    because ``r`` is nondecreasing; mirror image on the left.
    """
    n0 = -z[0]
    pos = z[n0:]
    log_ratio_r = theta - rf.log_rate(pos + 1)
    log_ratio_l = -theta - rf.log_rate(pos + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        tail_r = np.where(
            log_ratio_r < 0, lw[n0:] + log_ratio_r - np.log(-np.expm1(log_ratio_r)), np.inf
        )
        lw_neg = lw[n0::-1]
        tail_l = np.where(
            log_ratio_l < 0, lw_neg + log_ratio_l - np.log(-np.expm1(log_ratio_l)), np.inf
        )
    return tail_r, tail_l


def build_marginal(
    rf: RateFunction, theta: float, tail_target: float = DEFAULT_TAIL_TARGET
) -> GibbsMarginal:
    """Build the truncated canonical marginal at ``theta``.

    The support ``[z_l, z_r]`` is the smallest one (per side) whose geometric
    tail bound is at most ``tail_target / 2`` of the retained mass.
    """
    return _build_marginal_cached(rf, float(theta), float(tail_target))


@lru_cache(maxsize=4096)
def _build_marginal_cached(rf, theta, tail_target):
    if not 0 < tail_target < 1:
        raise ValueError("tail_target must lie in (0, 1)")
    _check_theta(rf, theta)
    n_big = _scratch_bound(rf, theta, tail_target)
    if n_big < 1:
        raise AdmissibilityError("rate table too short to build a marginal")
    z = np.arange(-n_big, n_big + 1)
    lf = log_rate_factorials(rf, n_big)
    lw = theta * z - lf[np.abs(z)]
    log_z_big = logsumexp(lw)
    tail_r, tail_l = _geometric_tails(rf, theta, z, lw)
    log_half = math.log(tail_target / 2.0)
    ok_r = np.nonzero(tail_r - log_z_big <= log_half)[0]
    ok_l = np.nonzero(tail_l - log_z_big <= log_half)[0]
    if len(ok_r) == 0 or len(ok_l) == 0:
        raise AdmissibilityError(
            f"tail target {tail_target:g} not reachable at theta={theta} within |z| <= {n_big}"
        )
    n_r, n_l = int(ok_r[0]), int(ok_l[0])
    while True:
        sl = slice(n_big - n_l, n_big + n_r + 1)
        log_z = float(logsumexp(lw[sl]))
        bound = float(np.exp(tail_r[n_r] - log_z) + np.exp(tail_l[n_l] - log_z))
        if bound <= tail_target:
            break
        if n_r >= n_big or n_l >= n_big:
            raise AdmissibilityError(f"tail target {tail_target:g} not reachable at theta={theta}")
        n_r, n_l = n_r + 1, n_l + 1
    weights = lw[sl].copy()
    weights.setflags(write=False)
    return GibbsMarginal(rf, theta, -n_l, n_r, weights, log_z, bound)


def log_partition(rf: RateFunction, theta: float, tail_target: float = DEFAULT_TAIL_TARGET) -> float:
    """``log Z(theta)`` (retained mass; relative truncation error <= tail_bound)."""
    return build_marginal(rf, theta, tail_target).log_Z


def log_z_tilde(beta: float, m: float, tail_target: float = DEFAULT_TAIL_TARGET) -> float:
    """Normaliser of the discrete normal law ``exp(-beta/2 (z - m)^2)``, in logs."""
    width = math.sqrt(2.0 * (-math.log(tail_target) + _EBL_SCRATCH_NATS) / beta) + 2
    z = np.arange(math.floor(m - width), math.ceil(m + width) + 1)
    return float(logsumexp(-0.5 * beta * (z - m) ** 2))


def ebl_partition_decomposition(rf: RateFunction, theta: float) -> tuple[float, float]:
    """Split ``log Z(theta) = theta^2/(2 beta) + log Z~(beta, theta/beta)`` for EBL rates.

    Returns ``(quadratic part, log Z~)`` where ``log Z~`` is obtained from the
    truncated ``log Z`` so the two pieces add up exactly.
    """
    if not rf.is_ebl:
        raise ValueError("the quadratic/periodic split only exists for EBL rates")
    quad = theta * theta / (2.0 * rf.beta)
    return quad, log_partition(rf, theta) - quad


# --- moments -----------------------------------------------------------------


def mean_u(rf: RateFunction, theta: float) -> float:
    """``u(theta) = E^theta(omega)``."""
    return build_marginal(rf, theta).mean


def variance(rf: RateFunction, theta: float) -> float:
    """``u'(theta)``, the one-site variance."""
    return build_marginal(rf, theta).variance


def third_central(rf: RateFunction, theta: float) -> float:
    """``u''(theta)``, the third central moment."""
    return build_marginal(rf, theta).third_central


class MomentMap:
    """``theta -> (u, u', u'')`` tabulated on a fixed grid."""

    def __init__(self, rf: RateFunction, thetas):
        self.rf = rf
        self.thetas = np.asarray(thetas, dtype=float)
        rows = []
        for th in self.thetas:
            m = build_marginal(rf, th)
            rows.append((m.mean, m.variance, m.third_central))
        table = np.array(rows).reshape(-1, 3)
        self.u, self.u_prime, self.u_double_prime = (table[:, k].copy() for k in range(3))
        for arr in (self.u, self.u_prime, self.u_double_prime):
            arr.setflags(write=False)
        if np.any(self.u_prime <= 0):
            raise ArithmeticError("non-positive variance encountered; u must be strictly increasing")


# --- inversion and flux ------------------------------------------------------

_BISECTION_CAP = 200


def _bracket(rf: RateFunction, u: float) -> tuple[float, float]:
    tb = theta_bar(rf)
    limit = math.inf if (tb.is_infinite or tb.diverging) else tb.value - 1e-9
    half = min(4.0, limit)
    while True:
        lo, hi = -half, half
        try:
            u_lo, u_hi = mean_u(rf, lo), mean_u(rf, hi)
        except AdmissibilityError:
            u_lo = u_hi = None
        if u_lo is not None and u_lo <= u <= u_hi:
            return lo, hi
        if half >= limit or half > 1e4 or u_lo is None:
            raise ValueError(f"u = {u} is outside the attained range of the mean")
        half = min(2.0 * half, limit)


def theta_of_u(rf: RateFunction, u: float, tol: float = 1e-10) -> float:
    """Invert the strictly increasing map ``theta -> u(theta)`` by bisection."""
    lo, hi = _bracket(rf, float(u))
    mid = 0.5 * (lo + hi)
    for _ in range(_BISECTION_CAP):
        mid = 0.5 * (lo + hi)
        gap = mean_u(rf, mid) - u
        if abs(gap) <= tol:
            return mid
        if gap < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(mid)):
            break
    if abs(mean_u(rf, mid) - u) > tol:
        raise ArithmeticError(f"bisection did not reach |u(theta) - u| <= {tol}")
    return mid


def flux_from_theta(rf: RateFunction, theta: float) -> float:
    """``E^theta(r(omega) + r(-omega))`` by truncated summation."""
    m = build_marginal(rf, theta)
    z = m.support
    return m.expect(rf.rate(z) + rf.rate(-z))


def flux_J(rf: RateFunction, u: float, check_tol: float = 1e-9) -> float:
    """Flux ``J(u)`` by direct expectation, cross-checked against ``2 cosh(theta(u))``."""
    theta = theta_of_u(rf, u)
    direct = flux_from_theta(rf, theta)
    closed = 2.0 * math.cosh(theta)
    if abs(direct - closed) > check_tol * closed:
        raise ArithmeticError(f"flux mismatch at u={u}: direct {direct!r} vs 2cosh {closed!r}")
    return direct


def flux_convexity(rf: RateFunction, theta: float) -> float:
    """``d^2 J / du^2`` at ``u(theta)`` from exact variance and third moment.

    With ``J = 2 cosh(theta(u))``: ``2 cosh/u'^2 - 2 sinh u''/u'^3``.
    """
    m = build_marginal(rf, theta)
    up, upp = m.variance, m.third_central
    return 2.0 * math.cosh(theta) / up**2 - 2.0 * math.sinh(theta) * upp / up**3


def convexity_scan(rf: RateFunction, theta_range=(-3.0, 3.0), grid_step: float = 0.01):
    """Grid ``theta = k * grid_step`` inside ``theta_range`` with ``d^2J/du^2`` values."""
    lo, hi = theta_range
    if not lo <= 0 <= hi:
        raise ValueError("scan range must contain theta = 0")
    k_lo = math.ceil(lo / grid_step - 1e-9)
    k_hi = math.floor(hi / grid_step + 1e-9)
    thetas = np.arange(k_lo, k_hi + 1) * grid_step
    values = np.array([flux_convexity(rf, th) for th in thetas])
    return thetas, values


def convexity_interval(rf: RateFunction, theta_range=(-3.0, 3.0), grid_step: float = 0.01):
    """Widest contiguous run of grid points around ``theta = 0`` where J is convex.

    Returns ``(theta_1, theta_2)``, the outermost grid points of that run. If
    the run reaches the edge of the scan the edge itself is reported.
    """
    thetas, values = convexity_scan(rf, theta_range, grid_step)
    i0 = int(np.argmin(np.abs(thetas)))
    if values[i0] <= 0:
        raise ArithmeticError("d^2J/du^2 is not positive at theta = 0")
    lo = i0
    while lo > 0 and values[lo - 1] > 0:
        lo -= 1
    hi = i0
    while hi < len(values) - 1 and values[hi + 1] > 0:
        hi += 1
    return float(thetas[lo]), float(thetas[hi])


def rh_speed(rf: RateFunction, theta_left: float, theta_right: float) -> float:
    """Rankine-Hugoniot speed ``(J_r - J_l) / (u_r - u_l)`` of a two-state shock."""
    u_l, u_r = mean_u(rf, theta_left), mean_u(rf, theta_right)
    if abs(u_r - u_l) < 1e-12:
        raise ZeroDivisionError("equal densities on both sides: speed undefined")
    j_l, j_r = flux_from_theta(rf, theta_left), flux_from_theta(rf, theta_right)
    return (j_r - j_l) / (u_r - u_l)
