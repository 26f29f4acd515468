"""Rank estimation by sampling attribute values.

A node counts how many attribute values it has observed (g) and how many of
them were lower than or equal to its own (l); l / g estimates its normalized
rank. Observations come from scanning its view every cycle and from one-way
UPD messages carrying a sender's attribute. Each active step sends two
UPDs: one to the neighbor whose advertised rank estimate lies closest to
any interior slice boundary (those nodes need the most samples), one to a
uniformly random neighbor. Measuring each neighbor against its own nearest
boundary keeps the sender independent of the receiver's rank, so every UPD
is an unbiased sample.

With a sliding window, observations are single bits kept in a FIFO of
fixed capacity, so the estimate only reflects the most recent W samples.
"""

from __future__ import annotations

import math
from statistics import NormalDist

import numba
import numpy as np

from .core import InFlightMessage, Network, NodeId, SliceSpec, slice_index

DEFAULT_WINDOW = 10_000


@numba.njit(cache=True)
def observe(s, i, bit, window):
    """Record one comparison outcome (1 iff the seen attribute <= a_i)."""
    if window == 0:
        s.g[i] += 1
        s.l[i] += bit
        return
    if s.win_len[i] == window:
        oldest = s.win_head[i]
        s.l[i] -= s.win[i, oldest]
        s.win[i, oldest] = bit
        s.win_head[i] = (oldest + 1) % window
    else:
        s.win[i, (s.win_head[i] + s.win_len[i]) % window] = bit
        s.win_len[i] += 1
    s.l[i] += bit
    s.g[i] = s.win_len[i]


@numba.njit(cache=True)
def refresh_estimate(s, i, bounds):
    if s.g[i] > 0:
        s.rval[i] = s.l[i] / s.g[i]
        s.slice_est[i] = slice_index(bounds, s.rval[i])


@numba.njit(cache=True)
def nearest_boundary(bounds, x):
    """Interior boundary closest to x (the lower one on ties); NaN when the
    partition has a single slice or x is NaN."""
    m = bounds.shape[0] - 1
    if m < 2 or x != x:
        return np.nan
    k = np.searchsorted(bounds, x)
    lo = min(max(k - 1, 1), m - 1)
    hi = min(max(k, 1), m - 1)
    if abs(bounds[hi] - x) < abs(bounds[lo] - x):
        return bounds[hi]
    return bounds[lo]


@numba.njit(cache=True)
def ranking_step(s, i, bounds, window, u):
    """Active step of node i on its freshly refreshed view. Returns the two
    UPD targets (j1, j2), or (-1, -1) when the view is empty."""
    L = s.view_len[i]
    if L == 0:
        return -1, -1
    a_i = s.attr[i]
    if window == 0:
        lower = 0
        for k in range(L):
            if s.view_attr[i, k] <= a_i:
                lower += 1
        s.g[i] += L
        s.l[i] += lower
    else:
        for k in range(L):
            observe(s, i, 1 if s.view_attr[i, k] <= a_i else 0, window)
    j1 = -1
    d_min = np.inf
    for k in range(L):
        r = s.view_rval[i, k]
        d = abs(r - nearest_boundary(bounds, r))
        if d != d:  # unknown estimate, or no interior boundary
            d = np.inf
        cand = s.view_id[i, k]
        if j1 < 0 or d < d_min or (d == d_min and cand < j1):
            d_min = d
            j1 = cand
    j2 = s.view_id[i, min(int(u * L), L - 1)]
    refresh_estimate(s, i, bounds)
    return j1, j2


@numba.njit(cache=True)
def receive_update(s, i, a_j, bounds, window):
    if not s.alive[i]:
        return False
    observe(s, i, 1 if a_j <= s.attr[i] else 0, window)
    refresh_estimate(s, i, bounds)
    return True


@numba.njit(cache=True)
def receive_batch(s, dst, a, bounds, window):
    for q in range(dst.shape[0]):
        receive_update(s, dst[q], a[q], bounds, window)


def ranking_active_step(net: Network, i: NodeId, spec: SliceSpec,
                        rng: np.random.Generator) -> list[InFlightMessage]:
    """Count i's view, pick its two UPD targets and update its estimate.
    The returned messages still have to be delivered."""
    j1, j2 = ranking_step(net.state, i, spec.as_array(), net.window, rng.random())
    if j1 < 0:
        return []
    a_i = float(net.state.attr[i])
    return [InFlightMessage(i, int(j), "UPD", (a_i,)) for j in (j1, j2)]


def ranking_receive(net: Network, msg: InFlightMessage, spec: SliceSpec) -> bool:
    """Apply an UPD at its destination; False if the destination has left."""
    return bool(receive_update(net.state, msg.dst, msg.payload[0], spec.as_array(), net.window))


def ranking_receive_many(net: Network, dsts, attrs, spec: SliceSpec) -> None:
    """Deliver UPDs carrying attrs[q] to dsts[q], in order."""
    receive_batch(net.state, np.asarray(dsts, dtype=np.int64), np.asarray(attrs, dtype=np.float64),
                  spec.as_array(), net.window)


def window_record(net: Network, i: NodeId, bit: int) -> None:
    if not net.window:
        raise ValueError("network was built without a sliding window")
    observe(net.state, i, int(bit), net.window)


def window_bits(net: Network, i: NodeId) -> list[int]:
    """Window contents, oldest first."""
    s, w = net.state, net.window
    head, n = int(s.win_head[i]), int(s.win_len[i])
    return [int(s.win[i, (head + k) % w]) for k in range(n)]


def window_bytes(capacity_bits: int) -> float:
    """Storage of a bit window, in kB (1 kB = 1000 bytes)."""
    return capacity_bits / (8 * 1000)


def rank_estimate(net: Network, i: NodeId) -> float | None:
    s = net.state
    return None if s.g[i] == 0 else float(s.l[i] / s.g[i])


class UnboundedSampleSize(ValueError):
    """The estimate sits exactly on a slice boundary, so no finite number of
    samples pins the slice down."""


def z_score(alpha: float) -> float:
    """Two-sided critical value Phi^-1(1 - alpha / 2)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    return NormalDist().inv_cdf(1.0 - alpha / 2.0)


def required_samples(p_hat: float, d: float, alpha: float) -> int:
    """Messages needed for the Wald interval around p_hat to stay inside the
    current slice: ceil((Z * sqrt(p_hat (1 - p_hat)) / d)^2)."""
    if not 0.0 < p_hat < 1.0:
        raise ValueError("p_hat must lie in (0, 1)")
    if d < 0:
        raise ValueError("boundary distance must be non-negative")
    if d == 0:
        raise UnboundedSampleSize(f"p_hat={p_hat} lies on a slice boundary")
    k = (z_score(alpha) * math.sqrt(p_hat * (1.0 - p_hat)) / d) ** 2
    return math.ceil(k)


def boundary_distance(spec: SliceSpec, p: float) -> float:
    """Distance from p to the nearest edge of the slice containing it."""
    lo, hi = spec.interval(max(1, int(np.searchsorted(spec.as_array(), p))))
    return min(p - lo, hi - p)
