"""Jump-rate functions of the bricklayers' models.

A rate function ``r`` maps an integer slope ``z`` to a positive rate. Every
rate function here is nondecreasing and satisfies ``r(z) * r(1 - z) == 1``.
All arithmetic is kept in the log domain; ``rate`` exponentiates on demand
and refuses log values above ``LOG_RATE_CAP`` instead of overflowing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

#: Largest log rate we are willing to exponentiate (``exp(700)`` ~ 1e304).
LOG_RATE_CAP = 700.0

#: Absolute tolerance on ``log r(z) + log r(1 - z)``.
CONSISTENCY_TOL = 1e-12

DEFAULT_DOMAIN_BOUND = 64


class RateDomainError(ValueError):
    """A slope outside the tabulated domain of a rate function was requested."""


@dataclass(frozen=True, eq=False)
class RateFunction:
    """Rate function ``z -> r(z)`` stored as a table of natural-log rates.

    ``log_table[k]`` holds ``log r(z_min + k)``. For the EBL kind the table
    is only a cache: :meth:`log_rate` evaluates the closed form
    ``-beta/2 + beta*z`` for any ``z``.
    """

    kind: str
    z_min: int
    log_table: np.ndarray = field(repr=False)
    beta: float | None = None

    def __post_init__(self):
        table = np.asarray(self.log_table, dtype=float)
        table.setflags(write=False)
        object.__setattr__(self, "log_table", table)
        _validate(self)

    @property
    def z_max(self) -> int:
        return self.z_min + len(self.log_table) - 1

    @property
    def domain(self) -> tuple[int, int]:
        return self.z_min, self.z_max

    @property
    def is_ebl(self) -> bool:
        return self.kind == "EBL"

    def log_rate(self, z):
        """``log r(z)``; vectorised over integer arrays."""
        z_arr = np.asarray(z)
        if self.is_ebl:
            out = -0.5 * self.beta + self.beta * z_arr
        else:
            if z_arr.size and (z_arr.min() < self.z_min or z_arr.max() > self.z_max):
                raise RateDomainError(
                    f"slope outside tabulated domain [{self.z_min}, {self.z_max}]"
                )
            out = self.log_table[z_arr - self.z_min]
        if np.ndim(out) == 0:
            return float(out)
        return out

    def rate(self, z):
        """``r(z)`` itself. Raises ``OverflowError`` past the log cap."""
        lr = self.log_rate(z)
        if np.max(lr) > LOG_RATE_CAP:
            raise OverflowError(f"log rate {np.max(lr):.1f} exceeds cap {LOG_RATE_CAP}")
        return np.exp(lr)

    def rate_table(self, lo: int, hi: int) -> np.ndarray:
        """Rates on the integer range ``[lo, hi]`` as a float array."""
        return np.asarray(self.rate(np.arange(lo, hi + 1)), dtype=float)

    def __eq__(self, other):
        if not isinstance(other, RateFunction):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.z_min == other.z_min
            and self.beta == other.beta
            and np.array_equal(self.log_table, other.log_table)
        )

    def __hash__(self):
        return hash((self.kind, self.z_min, self.beta, self.log_table.tobytes()))


def _validate(rf: RateFunction) -> None:
    if rf.kind not in ("EBL", "Tabulated"):
        raise ValueError(f"unknown rate kind {rf.kind!r}")
    if rf.kind == "EBL" and not (rf.beta is not None and rf.beta > 0):
        raise ValueError("EBL rates need beta > 0")
    table = rf.log_table
    if table.ndim != 1 or len(table) < 2:
        raise ValueError("log_table must be a 1-d array with at least two entries")
    if not np.all(np.isfinite(table)):
        raise ValueError("rates must be positive (finite log rates)")
    if np.any(np.diff(table) < 0):
        k = int(np.argmax(np.diff(table) < 0))
        raise ValueError(f"rate function not monotone at z={rf.z_min + k}")
    # pairs (z, 1 - z) with both ends inside the table
    z = np.arange(rf.z_min, rf.z_max + 1)
    partner = 1 - z
    inside = (partner >= rf.z_min) & (partner <= rf.z_max)
    if not inside.any():
        raise ValueError("table does not contain any pair (z, 1 - z)")
    resid = table[z[inside] - rf.z_min] + table[partner[inside] - rf.z_min]
    worst = float(np.max(np.abs(resid)))
    if worst > CONSISTENCY_TOL:
        raise ValueError(f"r(z) r(1-z) = 1 violated: max |log residual| = {worst:.3g}")


def make_ebl(beta: float, domain_bound: int = DEFAULT_DOMAIN_BOUND) -> RateFunction:
    """Exponential bricklayers' rates ``r(z) = exp(-beta/2 + beta*z)``."""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if domain_bound < 1:
        raise ValueError("domain_bound must be a positive integer")
    z = np.arange(-domain_bound, domain_bound + 1)
    return RateFunction("EBL", -domain_bound, -0.5 * beta + beta * z, beta=float(beta))


def make_tabulated(a: Sequence[float] | None = None, *, log_a: Sequence[float] | None = None) -> RateFunction:
    """Rate function with free values ``r(n) = a[n-1]`` for ``n >= 1``.

    Negative arguments are closed by ``r(-n) = 1 / a[n]`` and ``r(0) = 1 / a[0]``,
    giving the domain ``[-M+1, M]`` for ``M = len(a)``. Pass ``log_a`` instead
    of ``a`` to avoid a round trip through ``exp``.
    """
    if (a is None) == (log_a is None):
        raise ValueError("give exactly one of a and log_a")
    if log_a is not None:
        log_a = np.asarray(log_a, dtype=float)
        if not np.all(np.isfinite(log_a)):
            raise ValueError("tabulated log rates must be finite")
        a = np.exp(log_a)
    a = np.asarray(a, dtype=float)
    if a.ndim != 1 or len(a) < 2:
        raise ValueError("need at least two tabulated values")
    if np.any(a <= 0) or not np.all(np.isfinite(a)):
        raise ValueError("tabulated rates must be positive and finite")
    if (a[0] < 1) if log_a is None else (log_a[0] < 0):
        raise ValueError(f"a_1 = {a[0]} < 1 would break r(0) <= r(1)")
    diffs = np.diff(a) if log_a is None else np.diff(log_a)
    if np.any(diffs < 0):
        k = int(np.argmax(diffs < 0))
        raise ValueError(f"tabulated rates must be nondecreasing (a_{k + 1} > a_{k + 2})")
    if log_a is None:
        log_a = np.log(a)
    m = len(a)
    # z = -m+1 .. 0 takes -log a_{1-z}, z = 1..m takes log a_z
    negative = -log_a[::-1]
    return RateFunction("Tabulated", -m + 1, np.concatenate([negative, log_a]))


def ebl_table_values(beta: float, m: int) -> np.ndarray:
    """``a_n = exp(beta*n - beta/2)`` for ``n = 1..m``; EBL rates as a table."""
    n = np.arange(1, m + 1)
    return np.exp(beta * n - 0.5 * beta)


def perturbed_ebl(beta: float, n: int = 2, factor: float = 1.1, m: int = DEFAULT_DOMAIN_BOUND) -> RateFunction:
    """EBL table with the single entry ``a_n`` multiplied by ``factor``.

    Stays inside the model class (monotone, consistent) as long as the bump
    keeps the table nondecreasing, but breaks the constant ratio
    ``r(z+1)/r(z)``.
    """
    a = ebl_table_values(beta, m)
    a[n - 1] *= factor
    return make_tabulated(a)


def log_rate_factorial(rf: RateFunction, n: int) -> float:
    """``log r(n)! = sum_{y=1..n} log r(y)``, zero for ``n = 0``."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return 0.0
    if not rf.is_ebl and n > rf.z_max:
        raise RateDomainError(f"r({n})! needs rates beyond the table (z_max={rf.z_max})")
    return float(np.sum(rf.log_rate(np.arange(1, n + 1))))


def log_rate_factorials(rf: RateFunction, n_max: int) -> np.ndarray:
    """Running sums ``log r(n)!`` for ``n = 0..n_max``."""
    if n_max == 0:
        return np.zeros(1)
    if not rf.is_ebl and n_max > rf.z_max:
        raise RateDomainError(f"r({n_max})! needs rates beyond the table (z_max={rf.z_max})")
    return np.concatenate([[0.0], np.cumsum(rf.log_rate(np.arange(1, n_max + 1)))])


@dataclass(frozen=True)
class ThetaBar:
    """Limit of ``log r(n)``; ``diverging`` marks a finite-table lower bound."""

    value: float
    diverging: bool = False

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.value)

    def __float__(self):
        return float(self.value)

    def __str__(self):
        if self.is_infinite:
            return "+inf"
        if self.diverging:
            return f">= {self.value:.6g}, diverging"
        return f"{self.value:.6g}"


def theta_bar(rf: RateFunction) -> ThetaBar:
    """Estimate ``theta_bar = lim log r(n)``.

    EBL rates diverge, so the answer is ``+inf``. A finite table cannot see the
    limit: if the last few log rates are flat the last value is reported,
    otherwise ``log r(z_max)`` is returned as a lower bound flagged as diverging.
    """
    if rf.is_ebl:
        return ThetaBar(math.inf)
    tail = rf.log_table[-4:]
    last = float(tail[-1])
    if np.ptp(tail) <= 1e-12:
        return ThetaBar(last)
    return ThetaBar(last, diverging=True)


def to_document(rf: RateFunction) -> dict:
    """Plain-dict form ``{kind, beta?, table: [[z, log_rate], ...]}``."""
    doc = {"kind": rf.kind}
    if rf.is_ebl:
        doc["beta"] = rf.beta
        doc["domain_bound"] = rf.z_max
    doc["table"] = [[int(rf.z_min + k), float(v)] for k, v in enumerate(rf.log_table)]
    return doc


def from_document(doc: dict) -> RateFunction:
    """Inverse of :func:`to_document`. Validates like the constructors do."""
    if "kind" not in doc:
        raise ValueError("rate function document needs a 'kind' field")
    kind = doc["kind"]
    if kind == "EBL":
        if "beta" not in doc:
            raise ValueError("EBL rate function document needs 'beta'")
        bound = doc.get("domain_bound")
        if bound is None and doc.get("table"):
            bound = max(int(z) for z, _ in doc["table"])
        return make_ebl(float(doc["beta"]), int(bound or DEFAULT_DOMAIN_BOUND))
    if kind == "Tabulated":
        if "table" in doc:
            pairs = sorted((int(z), float(v)) for z, v in doc["table"])
            zs = [z for z, _ in pairs]
            if zs != list(range(zs[0], zs[0] + len(zs))):
                raise ValueError("tabulated rates must cover a contiguous range of z")
            return RateFunction("Tabulated", zs[0], np.array([v for _, v in pairs]))
        if "a" in doc:
            return make_tabulated(doc["a"])
        raise ValueError("Tabulated rate function document needs 'table' or 'a'")
    raise ValueError(f"unknown rate kind {kind!r}")
