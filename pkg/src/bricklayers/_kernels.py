"""Compiled inner loops for the event-driven simulations.

All kernels consume a caller-supplied buffer of uniforms and stop (without
consuming anything) when fewer than ``UNIFORMS_PER_EVENT`` remain, so the
Python side can refill from a ``numpy.random.Generator`` and the trajectory
depends only on the seed, never on the buffer size.

Rates come from a table ``r_tab[z + off] = r(z)``; slopes are kept within
``[-cap, cap]``, which the table covers with two cells of margin.
"""

import math

import numpy as np
from numba import njit

UNIFORMS_PER_EVENT = 3

STATUS_DONE = 0
STATUS_NEED_UNIFORMS = 1
STATUS_TRACER_AT_EDGE = 2
STATUS_DEAD = 3

# counters layout
EVENTS, REJECTIONS, LEFT_JUMPS, RIGHT_JUMPS = 0, 1, 2, 3


@njit(cache=True)
def tree_update(tree, size, leaf, value):
    k = size + leaf
    tree[k] = value
    k //= 2
    while k >= 1:
        tree[k] = tree[2 * k] + tree[2 * k + 1]
        k //= 2


@njit(cache=True)
def tree_select(tree, size, target):
    """Descend to the leaf holding ``target`` in cumulative order.

    Returns ``(leaf, residual)`` with ``0 <= residual <= leaf rate``. Empty
    right subtrees are never entered, so rounding cannot pick a zero leaf.
    """
    k = 1
    while k < size:
        left = tree[2 * k]
        if target >= left and tree[2 * k + 1] > 0.0:
            target -= left
            k = 2 * k + 1
        else:
            if target > left:
                target = left
            k = 2 * k
    return k - size, target


@njit(cache=True)
def tree_rebuild(tree, size):
    for k in range(size - 1, 0, -1):
        tree[k] = tree[2 * k] + tree[2 * k + 1]


# --- single lattice (optionally with a tracer) ---------------------------------


@njit(cache=True)
def lattice_leaf_rate(omega, ring, leaf, r_tab, off, ghost_l, ghost_r, q):
    """Rate of the bond stored in ``leaf``.

    Ring: leaf ``j`` is the bond ``(j, j+1 mod N)``. Ghost boundary: leaf ``j``
    is the bond ``(j-1, j)`` with sites ``-1`` and ``N`` replaced by the
    ghost-averaged rates. With a tracer at ``q >= 0`` the bond ``(q, q+1)``
    carries the upper wall's rate, whose left slope is ``omega[q] + 1``.
    """
    n = omega.shape[0]
    if ring:
        i = leaf
        left = omega[i] + (1 if i == q else 0)
        return r_tab[left + off] + r_tab[-omega[(i + 1) % n] + off]
    i = leaf - 1
    if i == -1:
        return ghost_l + r_tab[-omega[0] + off]
    left = omega[i] + (1 if i == q else 0)
    if i == n - 1:
        return r_tab[left + off] + ghost_r
    return r_tab[left + off] + r_tab[-omega[i + 1] + off]


@njit(cache=True)
def _lattice_refresh(omega, ring, tree, size, bond, r_tab, off, ghost_l, ghost_r, q):
    n = omega.shape[0]
    if ring:
        leaf = bond % n
    else:
        leaf = bond + 1
        if leaf < 0 or leaf > n:
            return
    tree_update(tree, size, leaf, lattice_leaf_rate(omega, ring, leaf, r_tab, off, ghost_l, ghost_r, q))


@njit(cache=True)
def _lattice_move(omega, ring, bond, cap):
    """Apply ``(w_i, w_{i+1}) -> (w_i - 1, w_{i+1} + 1)``; False if the cap blocks it."""
    n = omega.shape[0]
    if ring:
        a = bond % n
        b = (bond + 1) % n
        if omega[a] - 1 < -cap or omega[b] + 1 > cap:
            return False
        omega[a] -= 1
        omega[b] += 1
        return True
    if bond >= 0 and omega[bond] - 1 < -cap:
        return False
    if bond + 1 <= n - 1 and omega[bond + 1] + 1 > cap:
        return False
    if bond >= 0:
        omega[bond] -= 1
    if bond + 1 <= n - 1:
        omega[bond + 1] += 1
    return True


@njit(cache=True)
def lattice_run(
    omega, ring, tree, size, r_tab, off, cap, ghost_l, ghost_r,
    q_box, t, t_stop, uniforms, pos, counters, max_events,
):
    """Advance the lattice until ``t_stop``; returns ``(t, pos, status)``.

    ``q_box[0]`` is the tracer site or ``-1``. With a tracer the bonds next to
    it are split into the four coupled moves of the two-wall construction.
    """
    n = omega.shape[0]
    done = 0
    while True:
        if done >= max_events:
            return t, pos, STATUS_DONE
        if pos + UNIFORMS_PER_EVENT > uniforms.shape[0]:
            return t, pos, STATUS_NEED_UNIFORMS
        total = tree[1]
        if total <= 0.0:
            return t_stop, pos, STATUS_DEAD
        dt = -math.log(1.0 - uniforms[pos]) / total
        pos += 1
        if t + dt > t_stop:
            return t_stop, pos, STATUS_DONE
        t += dt
        leaf, resid = tree_select(tree, size, uniforms[pos] * total)
        pos += 1
        done += 1
        counters[EVENTS] += 1
        bond = leaf if ring else leaf - 1
        q = q_box[0]
        step = 0
        moved = True
        if q >= 0 and bond == ((q - 1) % n if ring else q - 1):
            # rows 1/2: lower wall grows at Q-1; row 1 also moves the tracer to Q-1
            w_q = omega[q]
            row1 = r_tab[-w_q + off] - r_tab[-w_q - 1 + off]
            moved = _lattice_move(omega, ring, bond, cap)
            if moved and resid < row1:
                step = -1
        elif q >= 0 and bond == q:
            # row 3 moves only the tracer, row 4 grows both walls at Q
            w_q = omega[q]
            row3 = r_tab[w_q + 1 + off] - r_tab[w_q + off]
            if resid < row3:
                step = 1
            else:
                moved = _lattice_move(omega, ring, bond, cap)
        else:
            moved = _lattice_move(omega, ring, bond, cap)
        if not moved:
            counters[REJECTIONS] += 1
            continue
        new_q = q
        if step != 0:
            new_q = q + step
            if ring:
                new_q %= n
            q_box[0] = new_q
            counters[LEFT_JUMPS if step < 0 else RIGHT_JUMPS] += 1
        for b in range(bond - 1, bond + 2):
            _lattice_refresh(omega, ring, tree, size, b, r_tab, off, ghost_l, ghost_r, new_q)
        if step != 0:
            for b in (q - 1, q, new_q - 1, new_q):
                _lattice_refresh(omega, ring, tree, size, b, r_tab, off, ghost_l, ghost_r, new_q)
            if not ring and (new_q < 1 or new_q > n - 2):
                return t, pos, STATUS_TRACER_AT_EDGE


# --- tracer frame ---------------------------------------------------------------


@njit(cache=True)
def _slot(offset, i, k, length):
    return (offset + i + k) % length


@njit(cache=True)
def frame_leaf_rate(buf, offset, k, leaf, r_tab, off, ghost_l, ghost_r):
    """Rate of one leaf of the frame chain.

    Leaves ``0..L-1`` are bonds keyed by the buffer slot of their left site;
    the slot of logical site ``K`` holds both ghost bonds. Leaf ``L`` is the
    left jump, leaf ``L+1`` the right jump of the tracer.
    """
    length = 2 * k + 1
    w0 = buf[_slot(offset, 0, k, length)]
    if leaf == length:
        return r_tab[-w0 + off] - r_tab[-w0 - 1 + off]
    if leaf == length + 1:
        return r_tab[w0 + 1 + off] - r_tab[w0 + off]
    i = (leaf - offset) % length - k
    if i == k:
        return (r_tab[buf[leaf] + off] + ghost_r) + (ghost_l + r_tab[-buf[offset] + off])
    right = buf[(leaf + 1) % length]
    if i == -1:
        return r_tab[buf[leaf] + off] + r_tab[-right - 1 + off]
    return r_tab[buf[leaf] + off] + r_tab[-right + off]


@njit(cache=True)
def _frame_refresh(buf, offset, k, tree, size, i, r_tab, off, ghost_l, ghost_r):
    """Refresh the bond whose left site has logical index ``i`` (``-K-1`` is the seam)."""
    length = 2 * k + 1
    if i < -k:
        i = k
    if i > k:
        i = k
    leaf = _slot(offset, i, k, length)
    tree_update(tree, size, leaf, frame_leaf_rate(buf, offset, k, leaf, r_tab, off, ghost_l, ghost_r))


@njit(cache=True)
def _frame_refresh_core(buf, offset, k, tree, size, r_tab, off, ghost_l, ghost_r):
    length = 2 * k + 1
    for i in range(-3, 3):
        _frame_refresh(buf, offset, k, tree, size, i, r_tab, off, ghost_l, ghost_r)
    for i in (-k, -k + 1, k - 1, k):
        _frame_refresh(buf, offset, k, tree, size, i, r_tab, off, ghost_l, ghost_r)
    for leaf in (length, length + 1):
        tree_update(tree, size, leaf, frame_leaf_rate(buf, offset, k, leaf, r_tab, off, ghost_l, ghost_r))


@njit(cache=True)
def _inverse_cdf(cdf, z_min, u):
    idx = np.searchsorted(cdf, u, side="right")
    if idx > cdf.shape[0] - 1:
        idx = cdf.shape[0] - 1
    return z_min + idx


@njit(cache=True)
def frame_run(
    buf, offset_box, k, tree, size, r_tab, off, cap, ghost_l, ghost_r,
    cdf_l, zmin_l, cdf_r, zmin_r, t, t_stop, uniforms, pos, counters, max_events,
):
    """Advance the tracer-frame chain until ``t_stop``; returns ``(t, pos, status)``.

    ``offset_box[0]`` is the buffer slot of logical site ``-K``. Sites that
    scroll into the window are drawn from the exact left/right marginals.
    """
    length = 2 * k + 1
    done = 0
    while True:
        if done >= max_events:
            return t, pos, STATUS_DONE
        if pos + UNIFORMS_PER_EVENT > uniforms.shape[0]:
            return t, pos, STATUS_NEED_UNIFORMS
        total = tree[1]
        dt = -math.log(1.0 - uniforms[pos]) / total
        pos += 1
        if t + dt > t_stop:
            return t_stop, pos, STATUS_DONE
        t += dt
        leaf, resid = tree_select(tree, size, uniforms[pos] * total)
        pos += 1
        done += 1
        counters[EVENTS] += 1
        offset = offset_box[0]
        if leaf == length:
            # left jump: lower wall grows at bond -1, then the frame follows Q-1
            s_m1 = _slot(offset, -1, k, length)
            s_0 = _slot(offset, 0, k, length)
            if buf[s_m1] - 1 < -cap or buf[s_0] + 1 > cap:
                counters[REJECTIONS] += 1
                continue
            buf[s_m1] -= 1
            buf[s_0] += 1
            offset = (offset - 1) % length
            buf[offset] = _inverse_cdf(cdf_l, zmin_l, uniforms[pos])
            pos += 1
            offset_box[0] = offset
            counters[LEFT_JUMPS] += 1
            _frame_refresh_core(buf, offset, k, tree, size, r_tab, off, ghost_l, ghost_r)
            continue
        if leaf == length + 1:
            # right jump: pure frame shift, the lower wall is untouched
            buf[offset] = _inverse_cdf(cdf_r, zmin_r, uniforms[pos])
            pos += 1
            offset = (offset + 1) % length
            offset_box[0] = offset
            counters[RIGHT_JUMPS] += 1
            _frame_refresh_core(buf, offset, k, tree, size, r_tab, off, ghost_l, ghost_r)
            continue
        i = (leaf - offset) % length - k
        if i == k:
            s_k = leaf
            right_part = r_tab[buf[s_k] + off] + ghost_r
            if resid < right_part:
                if buf[s_k] - 1 < -cap:
                    counters[REJECTIONS] += 1
                    continue
                buf[s_k] -= 1
                lo = k - 1
            else:
                if buf[offset] + 1 > cap:
                    counters[REJECTIONS] += 1
                    continue
                buf[offset] += 1
                lo = -k
            for j in (lo - 1, lo, lo + 1, k):
                _frame_refresh(buf, offset, k, tree, size, j, r_tab, off, ghost_l, ghost_r)
        else:
            s_a = leaf
            s_b = (leaf + 1) % length
            if buf[s_a] - 1 < -cap or buf[s_b] + 1 > cap:
                counters[REJECTIONS] += 1
                continue
            buf[s_a] -= 1
            buf[s_b] += 1
            for j in (i - 1, i, i + 1):
                _frame_refresh(buf, offset, k, tree, size, j, r_tab, off, ghost_l, ghost_r)
        if -2 <= i <= 1:
            _frame_refresh_core(buf, offset, k, tree, size, r_tab, off, ghost_l, ghost_r)
