"""The defect tracer (second class particle) of the bricklayers' dynamics.

Two equivalent descriptions are provided:

* :class:`CoupledPairState` -- two walls ``w-`` and ``w+ = w- + 1[site Q]``
  evolved by the coupling table. Sites stay fixed, the tracer ``Q`` walks.
* :class:`TracerFrameState` -- the lower wall as seen from the tracer,
  ``w_i = w-_{Q+i}`` on the window ``[-K, K]``. A tracer jump is a frame
  shift, done in O(1) by moving the offset of a circular buffer; the site
  that scrolls in is a fresh draw from the exact left/right marginal.

The frame chain is the workhorse for long runs; the coupled pair is the
reference it is checked against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .engine import (
    DEFAULT_SLOPE_CAP,
    GhostProduct,
    LatticeState,
    UniformStream,
    _tree_size,
    apply_move,
    bond_rate,
    rate_table,
    run_kernel,
)
from .gibbs import GibbsMarginal, build_marginal
from .rates import RateFunction

DEFAULT_WINDOW = 64


# --- coupled pair -------------------------------------------------------------------


@dataclass(frozen=True)
class CoupledEvent:
    """``kind`` is one of ``row1..row4`` (the moves next to the tracer) or ``joint``."""

    kind: str
    bond: int


class CoupledPairState:
    """Lower wall on an open lattice with ghost reservoirs plus the tracer site."""

    def __init__(self, lattice: LatticeState, q: int):
        if lattice.ring:
            raise ValueError("the coupled pair lives on a ghost-bounded lattice")
        if not 1 <= q <= lattice.n_sites - 2:
            raise ValueError("tracer must start in the interior")
        self.lattice = lattice
        lattice.tracer = int(q)
        lattice.rebuild_index()
        self.q0 = int(q)

    @classmethod
    def from_product_measure(
        cls, rf, theta_left, theta_right, n_sites, q, rng, slope_cap=DEFAULT_SLOPE_CAP
    ) -> "CoupledPairState":
        """Slopes ``w-_i ~ mu^(theta_left)`` for ``i < q`` and ``mu^(theta_right)`` for ``i >= q``."""
        left = build_marginal(rf, theta_left).sample(rng, q)
        right = build_marginal(rf, theta_right).sample(rng, n_sites - q)
        omega = np.concatenate([left, right])
        lat = LatticeState(rf, omega, GhostProduct(theta_left, theta_right, q), slope_cap)
        return cls(lat, q)

    @property
    def rf(self) -> RateFunction:
        return self.lattice.rf

    @property
    def omega_minus(self) -> np.ndarray:
        return self.lattice.omega

    @property
    def Q(self) -> int:
        return self.lattice.tracer

    @property
    def time(self) -> float:
        return self.lattice.time

    def omega_plus(self) -> np.ndarray:
        w = self.lattice.omega.copy()
        w[self.Q] += 1
        return w

    @property
    def left_jumps(self) -> int:
        return int(self.lattice.counters[K.LEFT_JUMPS])

    @property
    def right_jumps(self) -> int:
        return int(self.lattice.counters[K.RIGHT_JUMPS])

    @property
    def displacement(self) -> int:
        return self.right_jumps - self.left_jumps


def coupled_event_menu(state: CoupledPairState) -> list[tuple[CoupledEvent, float]]:
    """All coupled moves with their rates.

    Next to the tracer: row 1 (lower wall grows at ``Q-1``, tracer steps left),
    row 2 (both walls grow at ``Q-1``), row 3 (upper wall grows at ``Q``,
    tracer steps right), row 4 (both walls grow at ``Q``). Every other bond
    grows both walls together at the common rate.
    """
    lat, q, rf = state.lattice, state.Q, state.rf
    w = lat.omega
    if not 1 <= q <= lat.n_sites - 2:
        raise ValueError("tracer at the lattice boundary")
    rows = {
        "row1": rf.rate(-w[q]) - rf.rate(-w[q] - 1),
        "row2": rf.rate(w[q - 1]) + rf.rate(-w[q] - 1),
        "row3": rf.rate(w[q] + 1) - rf.rate(w[q]),
        "row4": rf.rate(w[q]) + rf.rate(-w[q + 1]),
    }
    menu = []
    for bond in lat.bonds():
        if bond == q - 1:
            menu.append((CoupledEvent("row1", bond), float(rows["row1"])))
            menu.append((CoupledEvent("row2", bond), float(rows["row2"])))
        elif bond == q:
            menu.append((CoupledEvent("row3", bond), float(rows["row3"])))
            menu.append((CoupledEvent("row4", bond), float(rows["row4"])))
        else:
            menu.append((CoupledEvent("joint", bond), bond_rate(lat, bond)))
    return menu


def apply_coupled_event(state: CoupledPairState, event: CoupledEvent) -> bool:
    """Carry out one coupled move. Returns False if the slope cap rejected it."""
    lat, q = state.lattice, state.Q
    if event.kind in ("row1", "row2") and event.bond != q - 1:
        raise ValueError(f"{event.kind} acts on bond Q-1 = {q - 1}")
    if event.kind in ("row3", "row4") and event.bond != q:
        raise ValueError(f"{event.kind} acts on bond Q = {q}")
    if event.kind == "row3":
        lat.tracer = q + 1
        lat.counters[K.RIGHT_JUMPS] += 1
    else:
        if not apply_move(lat, event.bond):
            return False
        if event.kind == "row1":
            lat.tracer = q - 1
            lat.counters[K.LEFT_JUMPS] += 1
    for bond in (q - 2, q - 1, q, q + 1):
        lat.refresh_bond(bond)
    if not 1 <= lat.tracer <= lat.n_sites - 2:
        raise RuntimeError("tracer reached the lattice boundary")
    return True


def coupled_step(state: CoupledPairState, rng: np.random.Generator) -> CoupledEvent:
    """One event of the coupled pair, chosen by linear scan over the menu."""
    menu = coupled_event_menu(state)
    rates = np.array([r for _, r in menu])
    total = rates.sum()
    state.lattice.time += -math.log(1.0 - rng.random()) / total
    k = int(np.searchsorted(np.cumsum(rates), rng.random() * total, side="right"))
    event = menu[min(k, len(menu) - 1)][0]
    state.lattice.counters[K.EVENTS] += 1
    apply_coupled_event(state, event)
    return event


# --- tracer frame ----------------------------------------------------------------------


@dataclass(frozen=True)
class FrameEvent:
    """``kind`` is ``bond`` (with its left logical site), ``left_jump`` or ``right_jump``."""

    kind: str
    bond: int | None = None


class TracerFrameState:
    """Lower wall on logical sites ``[-K, K]`` around the tracer.

    Outside the window the slopes are heat-bath ghosts from ``mu^(theta_left)``
    (left) and ``mu^(theta_right)`` (right).
    """

    def __init__(
        self,
        rf: RateFunction,
        window: np.ndarray,
        theta_left: float,
        theta_right: float,
        slope_cap: int = DEFAULT_SLOPE_CAP,
        time: float = 0.0,
    ):
        window = np.array(window, dtype=np.int64)
        if window.ndim != 1 or len(window) % 2 == 0 or len(window) < 7:
            raise ValueError("window must have odd length 2K+1 with K >= 3")
        self.rf = rf
        self.k = len(window) // 2
        self.length = len(window)
        self.theta_left, self.theta_right = float(theta_left), float(theta_right)
        self.slope_cap = int(slope_cap)
        if np.max(np.abs(window)) > self.slope_cap:
            raise ValueError("initial slopes exceed the slope cap")
        self.buf = window.copy()
        self.offset = 0
        self.time = float(time)
        self.counters = np.zeros(4, dtype=np.int64)
        self.r_tab, self.off = rate_table(rf, self.slope_cap)
        self.left_marginal = build_marginal(rf, self.theta_left)
        self.right_marginal = build_marginal(rf, self.theta_right)
        for m in (self.left_marginal, self.right_marginal):
            if max(abs(m.z_min), abs(m.z_max)) > self.slope_cap:
                raise ValueError("marginal support exceeds the slope cap")
        self.ghost_l = self.left_marginal.expect(rf.rate(self.left_marginal.support))
        self.ghost_r = self.right_marginal.expect(rf.rate(-self.right_marginal.support))
        self.size = _tree_size(self.length + 2)
        self.tree = np.zeros(2 * self.size)
        self.rebuild_index()

    @classmethod
    def from_product_measure(
        cls, rf, theta_left, theta_right, k=DEFAULT_WINDOW, rng=None, slope_cap=DEFAULT_SLOPE_CAP
    ) -> "TracerFrameState":
        """Draw the window from the two-sided product measure (left part ``i <= -1``)."""
        rng = np.random.default_rng() if rng is None else rng
        left = build_marginal(rf, theta_left).sample(rng, k)
        right = build_marginal(rf, theta_right).sample(rng, k + 1)
        return cls(rf, np.concatenate([left, right]), theta_left, theta_right, slope_cap)

    # -- access --------------------------------------------------------------

    def slot(self, i: int) -> int:
        if not -self.k <= i <= self.k:
            raise IndexError(f"logical site {i} outside [-{self.k}, {self.k}]")
        return (self.offset + i + self.k) % self.length

    def __getitem__(self, i: int) -> int:
        return int(self.buf[self.slot(i)])

    def window(self) -> np.ndarray:
        """Slopes ordered by logical site ``-K..K``."""
        return np.roll(self.buf, -self.offset)

    @property
    def left_jumps(self) -> int:
        return int(self.counters[K.LEFT_JUMPS])

    @property
    def right_jumps(self) -> int:
        return int(self.counters[K.RIGHT_JUMPS])

    @property
    def displacement(self) -> int:
        return self.right_jumps - self.left_jumps

    # -- rate index ----------------------------------------------------------

    def leaf_rate(self, leaf: int) -> float:
        return K.frame_leaf_rate(
            self.buf, self.offset, self.k, leaf, self.r_tab, self.off, self.ghost_l, self.ghost_r
        )

    def rebuild_index(self) -> None:
        self.tree[:] = 0.0
        for leaf in range(self.length + 2):
            self.tree[self.size + leaf] = self.leaf_rate(leaf)
        K.tree_rebuild(self.tree, self.size)

    @property
    def total_rate(self) -> float:
        return float(self.tree[1])


def frame_event_menu(state: TracerFrameState) -> list[tuple[FrameEvent, float]]:
    """Events of the frame chain in index order, with rates.

    Bulk bond ``i`` (left site ``i``) grows at ``r(w_i) + r(-w_{i+1})``; bond
    ``-1`` at ``r(w_-1) + r(-w_0 - 1)``; the left jump at
    ``r(-w_0) - r(-w_0 - 1)`` and the right jump at ``r(w_0 + 1) - r(w_0)``.
    Bonds ``-K-1`` and ``K`` reach into the ghosts.
    """
    rf, k = state.rf, state.k
    w = {i: state[i] for i in range(-k, k + 1)}
    menu = []
    for p in range(state.length):
        i = (p - state.offset) % state.length - k
        if i == k:
            menu.append((FrameEvent("bond", k), float(rf.rate(w[k]) + state.ghost_r)))
            menu.append((FrameEvent("bond", -k - 1), float(state.ghost_l + rf.rate(-w[-k]))))
        elif i == -1:
            menu.append((FrameEvent("bond", -1), float(rf.rate(w[-1]) + rf.rate(-w[0] - 1))))
        else:
            menu.append((FrameEvent("bond", i), float(rf.rate(w[i]) + rf.rate(-w[i + 1]))))
    w0 = w[0]
    menu.append((FrameEvent("left_jump"), float(rf.rate(-w0) - rf.rate(-w0 - 1))))
    menu.append((FrameEvent("right_jump"), float(rf.rate(w0 + 1) - rf.rate(w0))))
    return menu


def apply_frame_event(state: TracerFrameState, event: FrameEvent, rng: np.random.Generator) -> bool:
    """Carry out a frame event; ``rng`` supplies the slope that scrolls in on a jump."""
    k, cap, buf = state.k, state.slope_cap, state.buf
    if event.kind == "bond":
        i = event.bond
        a = state.slot(i) if i >= -k else None
        b = state.slot(i + 1) if i + 1 <= k else None
        if (a is not None and buf[a] - 1 < -cap) or (b is not None and buf[b] + 1 > cap):
            state.counters[K.REJECTIONS] += 1
            return False
        if a is not None:
            buf[a] -= 1
        if b is not None:
            buf[b] += 1
    elif event.kind == "left_jump":
        a, b = state.slot(-1), state.slot(0)
        if buf[a] - 1 < -cap or buf[b] + 1 > cap:
            state.counters[K.REJECTIONS] += 1
            return False
        buf[a] -= 1
        buf[b] += 1
        state.offset = (state.offset - 1) % state.length
        buf[state.offset] = state.left_marginal.sample_from_uniform(rng.random())
        state.counters[K.LEFT_JUMPS] += 1
    elif event.kind == "right_jump":
        buf[state.offset] = state.right_marginal.sample_from_uniform(rng.random())
        state.offset = (state.offset + 1) % state.length
        state.counters[K.RIGHT_JUMPS] += 1
    else:
        raise ValueError(f"unknown frame event {event.kind!r}")
    state.rebuild_index()
    return True


def frame_step(state: TracerFrameState, rng: np.random.Generator) -> FrameEvent:
    """One event of the frame chain by linear scan (Python reference path)."""
    menu = frame_event_menu(state)
    rates = np.array([r for _, r in menu])
    total = rates.sum()
    state.time += -math.log(1.0 - rng.random()) / total
    j = int(np.searchsorted(np.cumsum(rates), rng.random() * total, side="right"))
    event = menu[min(j, len(menu) - 1)][0]
    state.counters[K.EVENTS] += 1
    apply_frame_event(state, event, rng)
    return event


def run_frame_kernel(state: TracerFrameState, stream: UniformStream, t_stop: float, max_events: int = 2**62) -> None:
    off_box = np.array([state.offset], dtype=np.int64)
    lm, rm = state.left_marginal, state.right_marginal
    while True:
        stream.ensure(K.UNIFORMS_PER_EVENT)
        before = int(state.counters[K.EVENTS])
        t, pos, status = K.frame_run(
            state.buf, off_box, state.k, state.tree, state.size, state.r_tab, state.off,
            state.slope_cap, state.ghost_l, state.ghost_r, lm.cdf, lm.z_min, rm.cdf, rm.z_min,
            state.time, t_stop, stream.buffer, stream.pos, state.counters, max_events,
        )
        state.time, stream.pos = t, pos
        state.offset = int(off_box[0])
        max_events -= int(state.counters[K.EVENTS]) - before
        if status != K.STATUS_NEED_UNIFORMS:
            return


def advance(state, stream: UniformStream, t_stop: float) -> None:
    """Run either representation up to ``t_stop`` with the compiled kernels."""
    if isinstance(state, TracerFrameState):
        run_frame_kernel(state, stream, t_stop)
        return
    status = run_kernel(state.lattice, stream, t_stop)
    if status == K.STATUS_TRACER_AT_EDGE:
        raise RuntimeError("tracer reached the lattice boundary; enlarge the lattice")


# --- speed -------------------------------------------------------------------------------


def analytic_tracer_speed(rf: RateFunction, marginal_at_origin: GibbsMarginal) -> float:
    """``E[r(w_0 + 1) - r(w_0)] - E[r(-w_0) - r(-w_0 - 1)]`` under the given marginal."""
    z = marginal_at_origin.support
    right = rf.rate(z + 1) - rf.rate(z)
    left = rf.rate(-z) - rf.rate(-z - 1)
    return marginal_at_origin.expect(right - left)


@dataclass
class SpeedEstimate:
    v_hat: float
    stderr: float
    elapsed: float
    left_jumps: int
    right_jumps: int
    batch_speeds: np.ndarray
    times: np.ndarray
    displacements: np.ndarray

    def __iter__(self):
        yield self.v_hat
        yield self.stderr


def measure_tracer_speed(
    state, t_end: float, rng: np.random.Generator, n_batches: int = 20, points_per_batch: int = 1
) -> SpeedEstimate:
    """Displacement over elapsed time, with a batch-means standard error.

    The trajectory ``(time, displacement)`` is kept at ``points_per_batch``
    points per batch.
    """
    if n_batches < 20:
        raise ValueError("use at least 20 batches")
    elapsed = t_end - state.time
    if elapsed <= 0:
        raise ValueError("zero elapsed time")
    stream = UniformStream(rng)
    t0, d0 = state.time, state.displacement
    l0, r0 = state.left_jumps, state.right_jumps
    n_pts = n_batches * points_per_batch
    times = t0 + elapsed * np.arange(n_pts + 1) / n_pts
    times[-1] = t_end
    marks = [d0]
    for edge in times[1:]:
        advance(state, stream, float(edge))
        marks.append(state.displacement)
    marks = np.array(marks, dtype=np.int64)
    speeds = np.diff(marks[::points_per_batch]) / (elapsed / n_batches)
    v_hat = (marks[-1] - d0) / elapsed
    stderr = float(np.std(speeds, ddof=1) / math.sqrt(n_batches))
    return SpeedEstimate(
        v_hat, stderr, elapsed, state.left_jumps - l0, state.right_jumps - r0, speeds, times, marks
    )


# --- microscopic shock shape ------------------------------------------------------------

SAMPLE_OFFSETS = (-2, -1, 0, 1, 2)


def collect_frame_samples(
    state: TracerFrameState, rng: np.random.Generator, n_samples: int, spacing: float = 1.0
) -> np.ndarray:
    """Record ``(w_-2, w_-1, w_0, w_1, w_2)`` every ``spacing`` time units."""
    stream = UniformStream(rng)
    out = np.empty((n_samples, len(SAMPLE_OFFSETS)), dtype=np.int64)
    t = state.time
    for n in range(n_samples):
        t += spacing
        run_frame_kernel(state, stream, t)
        out[n] = [state[i] for i in SAMPLE_OFFSETS]
    return out


def _law(values: np.ndarray) -> dict[int, float]:
    vals, counts = np.unique(values, return_counts=True)
    return dict(zip(vals.tolist(), (counts / counts.sum()).tolist()))


def tv_distance(p: dict[int, float], q: dict[int, float]) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(z, 0.0) - q.get(z, 0.0)) for z in keys)


def marginal_law(m: GibbsMarginal) -> dict[int, float]:
    return dict(zip(m.support.tolist(), m.pmf.tolist()))


@dataclass
class ShiftReport:
    n_samples: int
    tv_left_vs_shifted_right: float
    tv_left_exact: float
    tv_right_exact: float
    corr_far: float
    corr_far_stderr: float

    @property
    def corr_z(self) -> float:
        return self.corr_far / self.corr_far_stderr if self.corr_far_stderr > 0 else math.inf


def shifted_marginal_check(
    samples: np.ndarray, left: GibbsMarginal, right: GibbsMarginal, min_samples: int = 1000, n_batches: int = 20
) -> ShiftReport:
    """Compare ``law(w_-1)`` with ``law(w_0 + 1)`` and both with the exact marginals.

    ``samples`` has columns ``w_-2, w_-1, w_0, w_1, w_2``. The correlation of
    ``(w_-2, w_2)`` gets a batch-means standard error because successive
    samples of one run are not independent.
    """
    samples = np.asarray(samples)
    n = len(samples)
    if n < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {n}")
    col = {o: samples[:, j] for j, o in enumerate(SAMPLE_OFFSETS)}
    law_m1, law_0 = _law(col[-1]), _law(col[0])
    law_0_shift = {z + 1: p for z, p in law_0.items()}
    batches = np.array_split(np.arange(n), n_batches)
    corrs = [np.corrcoef(col[-2][b], col[2][b])[0, 1] for b in batches]
    corr = float(np.corrcoef(col[-2], col[2])[0, 1])
    return ShiftReport(
        n,
        tv_distance(law_m1, law_0_shift),
        tv_distance(law_m1, marginal_law(left)),
        tv_distance(law_0, marginal_law(right)),
        corr,
        float(np.std(corrs, ddof=1) / math.sqrt(n_batches)),
    )


# --- replicas -----------------------------------------------------------------------------


def replica_displacements(
    representation: str,
    rf: RateFunction,
    theta_left: float,
    theta_right: float,
    t: float,
    n_replicas: int,
    seed: int,
    k: int = DEFAULT_WINDOW,
    margin: int | None = None,
) -> np.ndarray:
    """Tracer displacement at time ``t`` over independent replicas.

    ``representation`` is ``"frame"`` (window ``[-K, K]``) or ``"coupled"``
    (fixed lattice with ``margin`` sites on each side of the tracer's reach).
    """
    seqs = np.random.SeedSequence(seed).spawn(n_replicas)
    out = np.empty(n_replicas, dtype=np.int64)
    for n, ss in enumerate(seqs):
        rng = np.random.default_rng(ss)
        if representation == "frame":
            st = TracerFrameState.from_product_measure(rf, theta_left, theta_right, k, rng)
        elif representation == "coupled":
            v = analytic_tracer_speed(rf, build_marginal(rf, theta_right))
            reach = int(abs(v) * t + 6 * math.sqrt(10 * t)) + 1
            pad = k if margin is None else margin
            left_room = pad + (reach if v < 0 else int(6 * math.sqrt(10 * t)))
            right_room = pad + (reach if v >= 0 else int(6 * math.sqrt(10 * t)))
            st = CoupledPairState.from_product_measure(
                rf, theta_left, theta_right, left_room + right_room, left_room, rng
            )
        else:
            raise ValueError(f"unknown representation {representation!r}")
        advance(st, UniformStream(rng), t)
        out[n] = st.displacement
    return out
