"""Shared domain types: node identities, slice partitions, views and the
array-backed network state that every protocol kernel operates on.

Node ids double as row indices into the state arrays, so they are handed
out sequentially and never reused within a run.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numba
import numpy as np

NodeId = int

UNSET_SLICE = 0  # slice estimates are 1-based; 0 stands for "not yet known"


@dataclass(frozen=True)
class SliceSpec:
    """Partition of (0, 1] into adjacent half-open slices (b[k-1], b[k]]."""

    boundaries: tuple[float, ...]

    def __post_init__(self) -> None:
        b = tuple(float(x) for x in self.boundaries)
        if len(b) < 2 or b[0] != 0.0 or b[-1] != 1.0:
            raise ValueError("slice boundaries must start at 0 and end at 1")
        if any(lo >= hi for lo, hi in zip(b, b[1:])):
            raise ValueError("slice boundaries must be strictly increasing")
        object.__setattr__(self, "boundaries", b)

    @classmethod
    def equal(cls, m: int) -> SliceSpec:
        if m < 1:
            raise ValueError("need at least one slice")
        # k / m is correctly rounded, so a normalized rank alpha / n that equals
        # k / m mathematically lands exactly on the boundary float.
        return cls(tuple(k / m for k in range(m + 1)))

    @property
    def count(self) -> int:
        return len(self.boundaries) - 1

    @property
    def is_uniform(self) -> bool:
        m = self.count
        return self.boundaries == tuple(k / m for k in range(m + 1))

    def interval(self, k: int) -> tuple[float, float]:
        """(lower, upper) of the 1-based slice k."""
        return self.boundaries[k - 1], self.boundaries[k]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.boundaries, dtype=np.float64)


def slice_of(spec: SliceSpec, x: float) -> int:
    """1-based index k of the slice with b[k-1] < x <= b[k]."""
    if not 0.0 < x <= 1.0:
        raise ValueError(f"normalized rank {x!r} outside (0, 1]")
    return bisect.bisect_left(spec.boundaries, x)


@numba.njit(cache=True)
def slice_index(bounds, x):
    # Kernel-side lookup. A rank estimate of exactly 0 (no lower value seen yet)
    # is clamped into the first slice.
    k = np.searchsorted(bounds, x)
    if k < 1:
        return 1
    return k


def attribute_rank(population: Iterable[tuple[NodeId, float]]) -> dict[NodeId, int]:
    """1-based rank of every node in the attribute order (ties broken by id)."""
    pairs = list(population)
    ids = [i for i, _ in pairs]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate node ids in population")
    ordered = sorted(pairs, key=lambda p: (p[1], p[0]))
    return {node: k for k, (node, _) in enumerate(ordered, start=1)}


def sequence_ranks(values: Sequence[float] | np.ndarray, ids: Sequence[int] | np.ndarray) -> np.ndarray:
    """Vectorised 1-based ranks of `values`, ties broken by `ids`."""
    order = np.lexsort((np.asarray(ids), np.asarray(values)))
    ranks = np.empty(len(order), dtype=np.int64)
    ranks[order] = np.arange(1, len(order) + 1)
    return ranks


@dataclass(frozen=True)
class ViewEntry:
    """Neighbor record: id, age in owner cycles, attribute and the neighbor's
    random value (ordering) or rank estimate (ranking) as of insertion."""

    id: NodeId
    age: int
    attr: float
    rvalue: float


class NetState(NamedTuple):
    """The raw arrays handed to numba kernels (one row per node id)."""

    alive: np.ndarray
    attr: np.ndarray
    rval: np.ndarray
    slice_est: np.ndarray
    g: np.ndarray
    l: np.ndarray
    view_id: np.ndarray
    view_age: np.ndarray
    view_attr: np.ndarray
    view_rval: np.ndarray
    view_len: np.ndarray
    win: np.ndarray
    win_head: np.ndarray
    win_len: np.ndarray


class Network:
    """Growable struct-of-arrays store for every node ever created in a run.

    ``rval`` holds the random value for the ordering protocols and the rank
    estimate (NaN while unknown) for the ranking protocol.
    """

    def __init__(self, view_size: int, window: int = 0, capacity: int = 16):
        if view_size < 1:
            raise ValueError("view size must be at least 1")
        self.view_size = view_size
        self.window = window
        self.size = 0
        self._alloc(max(capacity, 1))

    def _alloc(self, cap: int) -> None:
        c = self.view_size
        w = max(self.window, 1)
        fresh = NetState(
            alive=np.zeros(cap, dtype=np.bool_),
            attr=np.zeros(cap),
            rval=np.full(cap, np.nan),
            slice_est=np.zeros(cap, dtype=np.int64),
            g=np.zeros(cap, dtype=np.int64),
            l=np.zeros(cap, dtype=np.int64),
            view_id=np.full((cap, c), -1, dtype=np.int64),
            view_age=np.zeros((cap, c), dtype=np.int64),
            view_attr=np.zeros((cap, c)),
            view_rval=np.zeros((cap, c)),
            view_len=np.zeros(cap, dtype=np.int64),
            win=np.zeros((cap, w) if self.window else (1, 1), dtype=np.uint8),
            win_head=np.zeros(cap, dtype=np.int64),
            win_len=np.zeros(cap, dtype=np.int64),
        )
        old = getattr(self, "state", None)
        if old is not None:
            n = self.size
            for name in NetState._fields:
                src, dst = getattr(old, name), getattr(fresh, name)
                if name == "win" and not self.window:
                    continue
                dst[:n] = src[:n]
        self.state = fresh
        self.capacity = cap

    def add_node(self, attr: float, rvalue: float = math.nan) -> NodeId:
        if self.size == self.capacity:
            self._alloc(2 * self.capacity)
        i = self.size
        self.size += 1
        s = self.state
        s.alive[i] = True
        s.attr[i] = attr
        s.rval[i] = rvalue
        return i

    def remove(self, i: NodeId) -> None:
        self.state.alive[i] = False

    def is_alive(self, i: NodeId) -> bool:
        return bool(self.state.alive[i])

    def live_ids(self) -> np.ndarray:
        return np.flatnonzero(self.state.alive[: self.size])

    def view(self, i: NodeId) -> list[ViewEntry]:
        s = self.state
        return [
            ViewEntry(int(s.view_id[i, k]), int(s.view_age[i, k]),
                      float(s.view_attr[i, k]), float(s.view_rval[i, k]))
            for k in range(s.view_len[i])
        ]

    def set_view(self, i: NodeId, entries: Sequence[ViewEntry]) -> None:
        ids = [e.id for e in entries]
        if len(entries) > self.view_size:
            raise ValueError(f"view of {len(entries)} entries exceeds capacity {self.view_size}")
        if len(set(ids)) != len(ids) or i in ids:
            raise ValueError("view entries must be distinct and exclude the owner")
        s = self.state
        for k, e in enumerate(entries):
            s.view_id[i, k] = e.id
            s.view_age[i, k] = e.age
            s.view_attr[i, k] = e.attr
            s.view_rval[i, k] = e.rvalue
        s.view_len[i] = len(entries)

    def entry_for(self, j: NodeId, age: int = 0) -> ViewEntry:
        """A fresh view entry describing node j's current values."""
        s = self.state
        return ViewEntry(j, age, float(s.attr[j]), float(s.rval[j]))


@dataclass(frozen=True)
class InFlightMessage:
    """A protocol message; `payload` is a snapshot of the sender's values
    taken at send time and is never mutated afterwards."""

    src: NodeId
    dst: NodeId
    kind: str  # "REQ", "ACK", "UPD", "REQ'", "ACK'"
    payload: tuple[float, ...]
    overlapping: bool = False
