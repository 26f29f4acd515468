"""Peer sampling: a full-view Cyclon variant and an idealised uniform sampler.

Cyclon variant, one exchange initiated by node i:

  1. every entry of i's view ages by one;
  2. the oldest neighbor j (smallest id on ties) becomes the partner;
  3. i ships its whole view minus j's entry plus a fresh <i, 0, a_i, r_i>;
  4. j answers with its whole view as it stood before the merge;
  5. both merge what they received, dropping self-pointers and keeping the
     fresher copy of any id present on both sides;
  6. received entries replace the ones that were shipped away: every
     received entry is kept and the owner's previous entries only fill the
     slots left up to c, freshest first (ties by id).

A plain "keep the c freshest of the union" rule makes both sides end up
with the same young entries and the overlay collapses onto a few hubs;
replacing instead of copying keeps in-degrees balanced, as in Cyclon.

Views are stored sorted by (age, id), which is also their iteration order.

The simulator treats a freshly refreshed view as up to date: `sync_entries`
copies the current values of live neighbors into the view right before the
owner acts, so stale values only come from overlapping messages.
"""

from __future__ import annotations

import enum

import numba
import numpy as np

from .core import Network, NodeId, ViewEntry


class SamplingMode(enum.IntEnum):
    CYCLON = 0
    UNIFORM = 1


@numba.njit(cache=True)
def _sort_by_age(ids, ages, attrs, rvals):
    # insertion sort by (age, id); views hold at most 2c + 1 candidates
    for a in range(1, ids.shape[0]):
        k = a
        while k > 0 and (ages[k] < ages[k - 1] or (ages[k] == ages[k - 1] and ids[k] < ids[k - 1])):
            ids[k], ids[k - 1] = ids[k - 1], ids[k]
            ages[k], ages[k - 1] = ages[k - 1], ages[k]
            attrs[k], attrs[k - 1] = attrs[k - 1], attrs[k]
            rvals[k], rvals[k - 1] = rvals[k - 1], rvals[k]
            k -= 1


@numba.njit(cache=True)
def _store_sorted(s, owner, ids, ages, attrs, rvals, n, c):
    # store the first min(n, c) candidates in (age, id) order
    _sort_by_age(ids[:n], ages[:n], attrs[:n], rvals[:n])
    m = min(n, c)
    for k in range(m):
        s.view_id[owner, k] = ids[k]
        s.view_age[owner, k] = ages[k]
        s.view_attr[owner, k] = attrs[k]
        s.view_rval[owner, k] = rvals[k]
    for k in range(m, c):
        s.view_id[owner, k] = -1
    s.view_len[owner] = m


@numba.njit(cache=True)
def _merge_into(s, owner, p_id, p_age, p_attr, p_rval, n_p, c):
    # Received entries take precedence (they replace what the owner shipped
    # away); the owner's own entries only fill the remaining slots, freshest
    # first. An id known to both sides keeps the fresher copy.
    L = s.view_len[owner]
    cap = L + n_p
    ids = np.empty(cap, dtype=np.int64)
    ages = np.empty(cap, dtype=np.int64)
    attrs = np.empty(cap)
    rvals = np.empty(cap)
    used = np.zeros(L, dtype=np.bool_)
    n = 0
    for q in range(n_p):
        e = p_id[q]
        if e == owner:
            continue
        ids[n] = e
        ages[n] = p_age[q]
        attrs[n] = p_attr[q]
        rvals[n] = p_rval[q]
        for k in range(L):
            if s.view_id[owner, k] == e:
                used[k] = True
                if s.view_age[owner, k] < p_age[q]:
                    ages[n] = s.view_age[owner, k]
                    attrs[n] = s.view_attr[owner, k]
                    rvals[n] = s.view_rval[owner, k]
                break
        n += 1
    received = n
    for k in range(L):
        if not used[k]:
            ids[n] = s.view_id[owner, k]
            ages[n] = s.view_age[owner, k]
            attrs[n] = s.view_attr[owner, k]
            rvals[n] = s.view_rval[owner, k]
            n += 1
    if n > c:
        # keep every received entry, then the freshest own entries
        _sort_by_age(ids[received:n], ages[received:n], attrs[received:n], rvals[received:n])
        n = max(c, received)
    _store_sorted(s, owner, ids, ages, attrs, rvals, n, c)


@numba.njit(cache=True)
def _drop_entry(s, i, k):
    L = s.view_len[i]
    for q in range(k, L - 1):
        s.view_id[i, q] = s.view_id[i, q + 1]
        s.view_age[i, q] = s.view_age[i, q + 1]
        s.view_attr[i, q] = s.view_attr[i, q + 1]
        s.view_rval[i, q] = s.view_rval[i, q + 1]
    s.view_id[i, L - 1] = -1
    s.view_len[i] = L - 1


@numba.njit(cache=True)
def cyclon_exchange(s, i, c):
    """Run one exchange for node i. Returns (partner, messages sent);
    partner is -1 for an empty view."""
    L = s.view_len[i]
    if L == 0:
        return -1, 0
    for k in range(L):
        s.view_age[i, k] += 1
    best = 0
    for k in range(1, L):
        if s.view_age[i, k] > s.view_age[i, best] or (
            s.view_age[i, k] == s.view_age[i, best] and s.view_id[i, k] < s.view_id[i, best]
        ):
            best = k
    j = s.view_id[i, best]
    if not s.alive[j]:
        _drop_entry(s, i, best)
        return j, 1

    # request payload: i's view without j, plus a fresh self entry
    ri_id = np.empty(L, dtype=np.int64)
    ri_age = np.empty(L, dtype=np.int64)
    ri_attr = np.empty(L)
    ri_rval = np.empty(L)
    ri_id[0] = i
    ri_age[0] = 0
    ri_attr[0] = s.attr[i]
    ri_rval[0] = s.rval[i]
    n = 1
    for k in range(L):
        if k != best:
            ri_id[n] = s.view_id[i, k]
            ri_age[n] = s.view_age[i, k]
            ri_attr[n] = s.view_attr[i, k]
            ri_rval[n] = s.view_rval[i, k]
            n += 1

    # reply payload: j's view before it merges anything
    Lj = s.view_len[j]
    rj_id = s.view_id[j, :Lj].copy()
    rj_age = s.view_age[j, :Lj].copy()
    rj_attr = s.view_attr[j, :Lj].copy()
    rj_rval = s.view_rval[j, :Lj].copy()

    _merge_into(s, j, ri_id, ri_age, ri_attr, ri_rval, n, c)
    _merge_into(s, i, rj_id, rj_age, rj_attr, rj_rval, Lj, c)
    return j, 2


@numba.njit(cache=True)
def sync_entries(s, i):
    """Overwrite the attribute and value of every live entry in i's view
    with the neighbor's current ones; ids and ages are untouched."""
    for k in range(s.view_len[i]):
        j = s.view_id[i, k]
        if s.alive[j]:
            s.view_attr[i, k] = s.attr[j]
            s.view_rval[i, k] = s.rval[j]


@numba.njit(cache=True)
def fill_uniform_view(s, i, live, c, us):
    """Replace i's view with min(c, |live|-1) distinct live nodes drawn
    uniformly (Floyd's subset sampling over the live set minus i). Consumes
    one uniform from `us` per chosen slot."""
    L = live.shape[0]
    pos = np.searchsorted(live, i)
    has_self = pos < L and live[pos] == i
    others = L - 1 if has_self else L
    m = min(c, others)
    picked = np.empty(m, dtype=np.int64)
    for q in range(m):
        top = others - m + q  # draw from 0..top inclusive
        t = int(us[q] * (top + 1))
        if t > top:
            t = top
        dup = False
        for r in range(q):
            if picked[r] == t:
                dup = True
                break
        picked[q] = top if dup else t
    ids = np.empty(m, dtype=np.int64)
    ages = np.zeros(m, dtype=np.int64)
    attrs = np.empty(m)
    rvals = np.empty(m)
    for q in range(m):
        k = picked[q]
        if has_self and k >= pos:
            k += 1
        node = live[k]
        ids[q] = node
        attrs[q] = s.attr[node]
        rvals[q] = s.rval[node]
    s.view_len[i] = 0
    _store_sorted(s, i, ids, ages, attrs, rvals, m, c)
    return m


def recompute_view(net: Network, i: NodeId) -> NodeId | None:
    """One Cyclon-variant exchange initiated by i; mutates i's and the
    partner's views. Returns the partner, or None if i's view was empty.
    A departed partner is purged from i's view and no exchange happens."""
    partner, _ = cyclon_exchange(net.state, i, net.view_size)
    return None if partner < 0 else int(partner)


def uniform_view(net: Network, i: NodeId, live: np.ndarray, rng: np.random.Generator) -> list[ViewEntry]:
    """Redraw i's view as c distinct uniform live nodes other than i."""
    live = np.asarray(live, dtype=np.int64)
    us = rng.random(net.view_size)
    fill_uniform_view(net.state, i, live, net.view_size, us)
    return net.view(i)
