"""Continuous-time simulation of the single-wall bricklayers' dynamics.

Bond ``(i, i+1)`` grows at rate ``r(w_i) + r(-w_{i+1})`` and the move is
``(w_i, w_{i+1}) -> (w_i - 1, w_{i+1} + 1)``. Two finite-volume policies are
provided:

* :class:`Ring` -- periodic lattice, the total slope is conserved.
* :class:`GhostProduct` -- open lattice whose outside neighbours are fresh
  draws from ``mu^(theta_left)`` / ``mu^(theta_right)``. The bond index stores
  the ghost-averaged rate (``E r(g) = exp(theta)``), which is the exact Markov
  rate of a heat-bath ghost resampled at every evaluation.

Bulk runs go through the compiled kernel; :func:`gillespie_step` is the plain
Python path used for event logs and as an oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
import scipy.sparse as sp

from . import _kernels as K
from .gibbs import build_marginal
from .rates import RateDomainError, RateFunction

DEFAULT_SLOPE_CAP = 24
_UNIFORM_CHUNK = 1 << 16


@dataclass(frozen=True)
class Ring:
    name = "Ring"


@dataclass(frozen=True)
class GhostProduct:
    theta_left: float
    theta_right: float
    split_index: int = 0
    name = "GhostProduct"


class UniformStream:
    """Buffered uniforms from a Generator, consumed strictly in order."""

    def __init__(self, rng: np.random.Generator, chunk: int = _UNIFORM_CHUNK):
        self.rng = rng
        self.chunk = chunk
        self.buffer = np.empty(0)
        self.pos = 0

    def ensure(self, n: int) -> None:
        if len(self.buffer) - self.pos < n:
            self.buffer = np.concatenate([self.buffer[self.pos :], self.rng.random(self.chunk)])
            self.pos = 0


def rate_table(rf: RateFunction, cap: int) -> tuple[np.ndarray, int]:
    """``(r_tab, off)`` with ``r_tab[z + off] = r(z)`` for ``|z| <= cap + 2``."""
    lo, hi = -cap - 2, cap + 2
    if not rf.is_ebl and (lo < rf.z_min or hi > rf.z_max):
        raise RateDomainError(
            f"slope cap {cap} needs rates on [{lo}, {hi}], table covers [{rf.z_min}, {rf.z_max}]"
        )
    return rf.rate_table(lo, hi), -lo


def _tree_size(n_leaves: int) -> int:
    return 1 << max(1, (n_leaves - 1).bit_length())


@dataclass
class RunStatistics:
    t_start: float
    t_end: float
    events: int = 0
    rejections: int = 0
    left_jumps: int = 0
    right_jumps: int = 0


@dataclass
class EventRecord:
    time: float
    bond: int
    pre: tuple[int, int]
    post: tuple[int, int]
    accepted: bool


class LatticeState:
    """Slopes on ``N`` sites, boundary policy, clock and bond-rate index."""

    def __init__(
        self,
        rf: RateFunction,
        omega,
        boundary: Ring | GhostProduct | None = None,
        slope_cap: int = DEFAULT_SLOPE_CAP,
        time: float = 0.0,
    ):
        self.rf = rf
        self.omega = np.array(omega, dtype=np.int64)
        if self.omega.ndim != 1 or len(self.omega) < 2:
            raise ValueError("need at least two sites")
        self.boundary = boundary if boundary is not None else Ring()
        self.slope_cap = int(slope_cap)
        if np.max(np.abs(self.omega)) > self.slope_cap:
            raise ValueError("initial slopes exceed the slope cap")
        self.time = float(time)
        self.r_tab, self.off = rate_table(rf, self.slope_cap)
        if isinstance(self.boundary, GhostProduct):
            left = build_marginal(rf, self.boundary.theta_left)
            right = build_marginal(rf, self.boundary.theta_right)
            self.ghost_left_marginal, self.ghost_right_marginal = left, right
            self.ghost_l = left.expect(rf.rate(left.support))
            self.ghost_r = right.expect(rf.rate(-right.support))
        else:
            self.ghost_left_marginal = self.ghost_right_marginal = None
            self.ghost_l = self.ghost_r = 0.0
        self.tracer = -1
        self.counters = np.zeros(4, dtype=np.int64)
        self.size = _tree_size(self.n_bonds)
        self.tree = np.zeros(2 * self.size)
        self.rebuild_index()

    # -- geometry ------------------------------------------------------------

    @property
    def n_sites(self) -> int:
        return len(self.omega)

    @property
    def ring(self) -> bool:
        return isinstance(self.boundary, Ring)

    @property
    def n_bonds(self) -> int:
        return self.n_sites if self.ring else self.n_sites + 1

    def bonds(self) -> range:
        """Physical bond labels: ``0..N-1`` on a ring, ``-1..N-1`` with ghosts."""
        return range(self.n_sites) if self.ring else range(-1, self.n_sites)

    def _leaf(self, bond: int) -> int:
        if self.ring:
            return bond % self.n_sites
        if not -1 <= bond <= self.n_sites - 1:
            raise IndexError(f"bond {bond} outside [-1, {self.n_sites - 1}]")
        return bond + 1

    @property
    def rejections(self) -> int:
        return int(self.counters[K.REJECTIONS])

    @property
    def events(self) -> int:
        return int(self.counters[K.EVENTS])

    # -- rate index ----------------------------------------------------------

    def leaf_rate(self, leaf: int) -> float:
        return K.lattice_leaf_rate(
            self.omega, self.ring, leaf, self.r_tab, self.off, self.ghost_l, self.ghost_r, self.tracer
        )

    def rebuild_index(self) -> None:
        self.tree[:] = 0.0
        for leaf in range(self.n_bonds):
            self.tree[self.size + leaf] = self.leaf_rate(leaf)
        K.tree_rebuild(self.tree, self.size)

    def refresh_bond(self, bond: int) -> None:
        if not self.ring and not -1 <= bond <= self.n_sites - 1:
            return
        leaf = self._leaf(bond)
        K.tree_update(self.tree, self.size, leaf, self.leaf_rate(leaf))

    @property
    def total_rate(self) -> float:
        return float(self.tree[1])

    def fresh_total_rate(self) -> float:
        return float(sum(bond_rate(self, b) for b in self.bonds()))

    def index_consistent(self, rtol: float = 1e-9) -> bool:
        fresh = self.fresh_total_rate()
        return abs(self.total_rate - fresh) <= rtol * abs(fresh)

    def copy(self) -> "LatticeState":
        other = LatticeState(self.rf, self.omega, self.boundary, self.slope_cap, self.time)
        other.tracer = self.tracer
        other.counters[:] = self.counters
        other.rebuild_index()
        return other


# --- operations -----------------------------------------------------------------


def bond_rate(state: LatticeState, i: int, rng: np.random.Generator | None = None) -> float:
    """``r(w_i) + r(-w_{i+1})`` evaluated from the rate function.

    At a ghost bond the outside slope is either averaged out (``rng=None``,
    the value the index uses) or drawn fresh from its marginal.
    """
    rf, w, n = state.rf, state.omega, state.n_sites
    if state.ring:
        i %= n
        return float(rf.rate(w[i]) + rf.rate(-w[(i + 1) % n]))
    if not -1 <= i <= n - 1:
        raise IndexError(f"bond {i} outside [-1, {n - 1}]")
    if i == -1:
        if rng is None:
            left = state.ghost_l
        else:
            left = float(rf.rate(state.ghost_left_marginal.sample(rng)))
        return float(left + rf.rate(-w[0]))
    if i == n - 1:
        if rng is None:
            right = state.ghost_r
        else:
            right = float(rf.rate(-state.ghost_right_marginal.sample(rng)))
        return float(rf.rate(w[i]) + right)
    return float(rf.rate(w[i]) + rf.rate(-w[i + 1]))


def _site_pair(state: LatticeState, i: int) -> tuple[int | None, int | None]:
    n = state.n_sites
    if state.ring:
        return i % n, (i + 1) % n
    return (i if i >= 0 else None), (i + 1 if i + 1 <= n - 1 else None)


def apply_move(state: LatticeState, i: int) -> bool:
    """Grow the column above bond ``i``. Returns False (and counts a rejection)
    when the move would push a slope past the cap."""
    a, b = _site_pair(state, i)
    cap = state.slope_cap
    if (a is not None and state.omega[a] - 1 < -cap) or (b is not None and state.omega[b] + 1 > cap):
        state.counters[K.REJECTIONS] += 1
        return False
    if a is not None:
        state.omega[a] -= 1
    if b is not None:
        state.omega[b] += 1
    for bond in (i - 1, i, i + 1):
        state.refresh_bond(bond)
    return True


def _select_linear(state: LatticeState, target: float) -> int:
    rates = np.array([state.leaf_rate(leaf) for leaf in range(state.n_bonds)])
    cum = np.cumsum(rates)
    leaf = int(np.searchsorted(cum, target, side="right"))
    return min(leaf, state.n_bonds - 1)


def _leaf_to_bond(state: LatticeState, leaf: int) -> int:
    return leaf if state.ring else leaf - 1


def gillespie_step(
    state: LatticeState,
    rng: np.random.Generator,
    selection: str = "tree",
    t_stop: float = math.inf,
) -> EventRecord | None:
    """One exact stochastic-simulation event.

    Draws an exponential holding time at the current total rate, picks a bond
    with probability proportional to its rate and grows it. If the holding
    time would overshoot ``t_stop`` the clock is set to ``t_stop`` and None is
    returned (memorylessness makes this exact).
    """
    if state.tracer >= 0:
        raise ValueError("use the tracer module to step a coupled pair")
    total = state.total_rate
    if total <= 0:
        raise ValueError("total rate is zero")
    dt = -math.log(1.0 - rng.random()) / total
    if state.time + dt > t_stop:
        state.time = t_stop
        return None
    state.time += dt
    target = rng.random() * total
    if selection == "tree":
        leaf, _ = K.tree_select(state.tree, state.size, target)
    elif selection == "linear":
        leaf = _select_linear(state, target)
    else:
        raise ValueError(f"unknown selection {selection!r}")
    bond = _leaf_to_bond(state, leaf)
    a, b = _site_pair(state, bond)
    pre = (None if a is None else int(state.omega[a]), None if b is None else int(state.omega[b]))
    state.counters[K.EVENTS] += 1
    ok = apply_move(state, bond)
    post = (None if a is None else int(state.omega[a]), None if b is None else int(state.omega[b]))
    return EventRecord(state.time, bond, pre, post, ok)


def run_kernel(state: LatticeState, stream: UniformStream, t_stop: float, max_events: int = 2**62) -> int:
    """Drive the compiled kernel up to ``t_stop``; returns the kernel status."""
    q_box = np.array([state.tracer], dtype=np.int64)
    while True:
        stream.ensure(K.UNIFORMS_PER_EVENT)
        before = int(state.counters[K.EVENTS])
        t, pos, status = K.lattice_run(
            state.omega, state.ring, state.tree, state.size, state.r_tab, state.off,
            state.slope_cap, state.ghost_l, state.ghost_r, q_box, state.time, t_stop,
            stream.buffer, stream.pos, state.counters, max_events,
        )
        state.time, stream.pos = t, pos
        state.tracer = int(q_box[0])
        max_events -= int(state.counters[K.EVENTS]) - before
        if status != K.STATUS_NEED_UNIFORMS:
            return status


def simulate_until(
    state: LatticeState,
    t_end: float,
    rng: np.random.Generator,
    hooks: Iterable[Callable[[LatticeState], None]] = (),
    sample_times=None,
    event_log: list | None = None,
) -> RunStatistics:
    """Run until the clock reaches ``t_end``, firing ``hooks`` at sample times.

    ``sample_times`` defaults to ``[t_end]``; each hook is called with the
    state as it stands at that time. Passing a list as ``event_log`` switches
    to the Python stepper and appends one :class:`EventRecord` per event.
    """
    if t_end < state.time:
        raise ValueError("t_end lies before the current time")
    hooks = list(hooks)
    times = [t_end] if sample_times is None else sorted(float(s) for s in sample_times)
    if any(s < state.time or s > t_end for s in times):
        raise ValueError("sample times must lie in [state.time, t_end]")
    if not times or times[-1] != t_end:
        times.append(t_end)
        fire_last = False
    else:
        fire_last = True
    start = state.counters.copy()
    stats = RunStatistics(state.time, t_end)
    stream = None if event_log is not None else UniformStream(rng)
    for k, s in enumerate(times):
        if event_log is not None:
            while state.time < s:
                rec = gillespie_step(state, rng, t_stop=s)
                if rec is not None:
                    event_log.append(rec)
        else:
            status = run_kernel(state, stream, s)
            if status == K.STATUS_DEAD:
                state.time = s
        if k < len(times) - 1 or fire_last:
            for hook in hooks:
                hook(state)
    delta = state.counters - start
    stats.events = int(delta[K.EVENTS])
    stats.rejections = int(delta[K.REJECTIONS])
    return stats


# --- measurement hooks ------------------------------------------------------------


class MarginalHistogram:
    """Pooled histogram of slope values over the chosen sites."""

    def __init__(self, sites=None):
        self.sites = sites
        self.counts: dict[int, int] = {}

    def __call__(self, state: LatticeState) -> None:
        w = state.omega if self.sites is None else state.omega[self.sites]
        values, counts = np.unique(w, return_counts=True)
        for v, c in zip(values.tolist(), counts.tolist()):
            self.counts[v] = self.counts.get(v, 0) + c

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def pmf(self, support) -> np.ndarray:
        tot = self.total
        return np.array([self.counts.get(int(z), 0) / tot for z in support])


class BlockProfile:
    """Block-averaged slope profile recorded at every sample time."""

    def __init__(self, block: int):
        self.block = int(block)
        self.times: list[float] = []
        self.profiles: list[np.ndarray] = []

    def __call__(self, state: LatticeState) -> None:
        n_blocks = state.n_sites // self.block
        w = state.omega[: n_blocks * self.block].reshape(n_blocks, self.block)
        self.times.append(state.time)
        self.profiles.append(w.mean(axis=1))


# --- exact small systems -------------------------------------------------------------


def build_exact_generator(rf: RateFunction, n_sites: int, m: int, boundary: str = "ring"):
    """Rate matrix of the ring chain truncated to slopes in ``[-m, m]``.

    Moves leaving the box are dropped. Returns ``(Q, states)`` where ``Q`` is
    a CSR matrix with ``Q[x, y]`` the rate ``x -> y`` and zero row sums, and
    ``states`` lists the configurations in mixed-radix order.
    """
    if boundary != "ring":
        raise ValueError("only the ring boundary has a finite exact generator")
    n_states = (2 * m + 1) ** n_sites
    if n_states > 10**6:
        raise ValueError(f"{n_states} states exceed the 10^6 budget")
    radix = 2 * m + 1
    digits = np.indices((radix,) * n_sites).reshape(n_sites, -1).T
    states = digits - m
    powers = radix ** np.arange(n_sites - 1, -1, -1)
    rows, cols, vals = [], [], []
    idx = np.arange(n_states)
    for i in range(n_sites):
        j = (i + 1) % n_sites
        wi, wj = states[:, i], states[:, j]
        ok = (wi - 1 >= -m) & (wj + 1 <= m)
        rate = rf.rate(wi) + rf.rate(-wj)
        target = idx - powers[i] + powers[j]
        rows.append(idx[ok])
        cols.append(target[ok])
        vals.append(rate[ok])
    rows, cols, vals = (np.concatenate(x) for x in (rows, cols, vals))
    q = sp.coo_matrix((vals, (rows, cols)), shape=(n_states, n_states)).tocsr()
    out = np.asarray(q.sum(axis=1)).ravel()
    q = q - sp.diags(out)
    return q.tocsr(), states


def product_weights(rf: RateFunction, theta: float, states: np.ndarray) -> np.ndarray:
    """Untruncated product-measure weights ``prod_j mu^(theta)(w_j)`` of the given rows."""
    marg = build_marginal(rf, theta)
    return np.exp(marg.log_pmf(states).sum(axis=1))


@dataclass
class HeightField:
    """Column heights with ``w_i = h_{i-1} - h_i`` and a pinned first column."""

    h: np.ndarray = field(repr=False)

    def slopes(self) -> np.ndarray:
        return self.h[:-1] - self.h[1:]


def height_field(state: LatticeState, h0: int = 0) -> HeightField:
    """Heights ``h_0 = h0``, ``h_i = h_{i-1} - w_i`` for ``i = 1..N-1``."""
    h = np.empty(state.n_sites, dtype=np.int64)
    h[0] = h0
    h[1:] = h0 - np.cumsum(state.omega[1:])
    return HeightField(h)


def iid_lattice(
    rf: RateFunction,
    n_sites: int,
    rng: np.random.Generator,
    theta_left: float,
    theta_right: float | None = None,
    split_index: int | None = None,
    boundary: str = "ring",
    slope_cap: int = DEFAULT_SLOPE_CAP,
) -> LatticeState:
    """Independent initial slopes: ``mu^(theta_left)`` left of ``split_index``,
    ``mu^(theta_right)`` from it on."""
    theta_right = theta_left if theta_right is None else theta_right
    split = n_sites if split_index is None else int(split_index)
    left = build_marginal(rf, theta_left).sample(rng, split)
    right = build_marginal(rf, theta_right).sample(rng, n_sites - split)
    omega = np.concatenate([left, right])
    if boundary == "ring":
        bnd = Ring()
    elif boundary == "ghost":
        bnd = GhostProduct(theta_left, theta_right, split)
    else:
        raise ValueError(f"unknown boundary {boundary!r}")
    return LatticeState(rf, omega, bnd, slope_cap)
