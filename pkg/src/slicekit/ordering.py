"""Random-value ordering protocols: JK and its gain-maximising variant mod-JK.

Each node holds a random value r_i in (0, 1] and swaps it with a neighbor
whenever the attribute order and the random-value order of the pair
disagree, i.e. (a_j - a_i)(r_j - r_i) < 0. Once the random values are sorted
like the attributes, r_i is the node's estimate of its normalized rank.

The two variants only differ in whom they contact:

* JK picks a uniformly random neighbor that its view reports as misplaced,
  or any uniformly random neighbor when there is none;
* mod-JK picks the neighbor whose swap would most reduce the local disorder
  of its view (scanning in view order, later entries win ties).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numba
import numpy as np

from .core import InFlightMessage, Network, NodeId, SliceSpec, slice_index
from .metrics import ldm, local_indices

JK = 0
MOD_JK = 1


class OrderingMode(enum.IntEnum):
    JK = JK
    MOD_JK = MOD_JK


def is_misplaced(i: tuple[float, float], j: tuple[float, float]) -> bool:
    """True iff the (attr, rvalue) pairs i and j are ordered differently."""
    (a_i, r_i), (a_j, r_j) = i, j
    return (a_j - a_i) * (r_j - r_i) < 0


@numba.njit(cache=True)
def swap_gain(la_i, lr_i, la_j, lr_j, c):
    """Local disorder removed by swapping the random values of i and j."""
    return ((la_i - lr_i) ** 2 + (la_j - lr_j) ** 2
            - (la_i - lr_j) ** 2 - (la_j - lr_i) ** 2) / (c + 1)


@numba.njit(cache=True)
def local_context(s, i):
    """(ids, attrs, rvals) over i's view plus i itself, i at position 0.
    Neighbor values come from the view entries, so they may be stale."""
    L = s.view_len[i]
    ids = np.empty(L + 1, dtype=np.int64)
    attrs = np.empty(L + 1)
    rvals = np.empty(L + 1)
    ids[0] = i
    attrs[0] = s.attr[i]
    rvals[0] = s.rval[i]
    for k in range(L):
        ids[k + 1] = s.view_id[i, k]
        attrs[k + 1] = s.view_attr[i, k]
        rvals[k + 1] = s.view_rval[i, k]
    return ids, attrs, rvals


@numba.njit(cache=True)
def choose_partner(s, i, mode, u, c):
    """View slot of the partner (-1 for an empty view) and whether the view
    says the pair is misplaced. `u` is one uniform draw, used by JK only."""
    L = s.view_len[i]
    if L == 0:
        return -1, False
    a_i = s.attr[i]
    r_i = s.rval[i]
    if mode == MOD_JK:
        ids, attrs, rvals = local_context(s, i)
        la, lr = local_indices(attrs, rvals, ids)
        best = -1
        best_gain = -np.inf
        for k in range(L):
            gk = swap_gain(la[0], lr[0], la[k + 1], lr[k + 1], c)
            if gk >= best_gain:
                best_gain = gk
                best = k
    else:
        misplaced = 0
        for k in range(L):
            if (s.view_attr[i, k] - a_i) * (s.view_rval[i, k] - r_i) < 0:
                misplaced += 1
        if misplaced > 0:
            target = min(int(u * misplaced), misplaced - 1)
            best = -1
            for k in range(L):
                if (s.view_attr[i, k] - a_i) * (s.view_rval[i, k] - r_i) < 0:
                    if target == 0:
                        best = k
                        break
                    target -= 1
        else:
            best = min(int(u * L), L - 1)
    expected = (s.view_attr[i, best] - a_i) * (s.view_rval[i, best] - r_i) < 0
    return best, expected


@numba.njit(cache=True)
def deliver_request(s, src, dst, a_src, r_src, bounds):
    """Handle REQ(r_src, a_src) at dst together with the ACK back at src.

    The two values are exchanged iff dst is alive, the pair is misplaced
    according to the offered r_src and dst's current value, and src still
    holds r_src (an overlapping REQ may have been overtaken by another swap
    of src). Values are therefore only ever permuted, never duplicated.
    Returns whether the swap happened.
    """
    if not s.alive[dst]:
        return False
    r_dst = s.rval[dst]
    ok = (a_src - s.attr[dst]) * (r_src - r_dst) < 0 and s.rval[src] == r_src
    if ok:
        s.rval[dst] = r_src
        s.rval[src] = r_dst
    s.slice_est[dst] = slice_index(bounds, s.rval[dst])
    s.slice_est[src] = slice_index(bounds, s.rval[src])
    return ok


def ldm_of(net: Network, i: NodeId) -> float:
    ids, attrs, rvals = local_context(net.state, i)
    return float(ldm(attrs, rvals, ids, net.view_size))


def gain(net: Network, i: NodeId, j: NodeId) -> float:
    """Drop in i's local disorder if i and its neighbor j swapped values."""
    ids, attrs, rvals = local_context(net.state, i)
    where = np.flatnonzero(ids[1:] == j)
    if where.size == 0:
        raise ValueError(f"node {j} is not in the view of node {i}")
    la, lr = local_indices(attrs, rvals, ids)
    k = int(where[0]) + 1
    return float(swap_gain(la[0], lr[0], la[k], lr[k], net.view_size))


def select_partner(net: Network, i: NodeId, mode: OrderingMode,
                   rng: np.random.Generator | None = None) -> NodeId | None:
    u = rng.random() if rng is not None else 0.0
    k, _ = choose_partner(net.state, i, int(mode), u, net.view_size)
    return None if k < 0 else int(net.state.view_id[i, k])


def send_request(net: Network, i: NodeId, j: NodeId, overlapping: bool = False) -> InFlightMessage:
    s = net.state
    return InFlightMessage(i, j, "REQ", (float(s.rval[i]), float(s.attr[i])), overlapping)


@dataclass(frozen=True)
class SwapOutcome:
    swapped: bool

    @property
    def outcome(self) -> str:
        return "swapped" if self.swapped else "no-op"


def swap_step(net: Network, msg: InFlightMessage, spec: SliceSpec) -> SwapOutcome:
    """Deliver a REQ (built by `send_request`, possibly earlier) and its ACK."""
    r_src, a_src = msg.payload
    ok = deliver_request(net.state, msg.src, msg.dst, a_src, r_src, spec.as_array())
    return SwapOutcome(bool(ok))
