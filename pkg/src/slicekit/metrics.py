"""Disorder measures computed by an omniscient observer.

GDM  mean squared gap between attribute rank and random-value rank.
SDM  summed, width-normalised distance between true and believed slice.
LDM  the GDM restricted to a node's view plus itself, divided by c + 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numba
import numpy as np

from .core import UNSET_SLICE, SliceSpec, sequence_ranks


@dataclass(frozen=True)
class CycleMetrics:
    cycle: int
    gdm: Optional[float]  # None for the ranking protocol
    sdm: float
    messages_sent: int
    unsuccessful_swaps: int
    live_nodes: int
    swap_attempts: int = 0
    view_messages: int = 0

    def __post_init__(self) -> None:
        if self.sdm < 0 or (self.gdm is not None and self.gdm < 0):
            raise ValueError("disorder measures are non-negative")
        if self.unsuccessful_swaps > self.messages_sent:
            raise ValueError("more unsuccessful swaps than messages")


def gdm(alpha: Sequence[int] | np.ndarray, rho: Sequence[int] | np.ndarray) -> float:
    """(1/n) sum (alpha_i - rho_i)^2 over matching rank sequences."""
    a = np.asarray(alpha, dtype=np.int64)
    r = np.asarray(rho, dtype=np.int64)
    if a.size == 0:
        raise ValueError("GDM undefined for an empty population")
    if a.shape != r.shape:
        raise ValueError("rank sequences differ in length")
    return int(np.sum((a - r) ** 2)) / a.size


def gdm_of(attrs, rvals, ids) -> float:
    """GDM straight from values: ranks are taken with ties broken by id."""
    return gdm(sequence_ranks(attrs, ids), sequence_ranks(rvals, ids))


def true_slices(attrs, ids, spec: SliceSpec) -> np.ndarray:
    """Slice each node truly belongs to, from alpha_i / n."""
    alpha = sequence_ranks(attrs, ids)
    return np.searchsorted(spec.as_array(), alpha / alpha.size, side="left")


def sdm(true: Sequence[int] | np.ndarray, estimated: Sequence[int] | np.ndarray, spec: SliceSpec) -> float:
    """Sum over nodes of |mid(true) - mid(estimate)| / width(true).

    Unknown estimates (0) count as slice 1. With equal widths this is the
    plain slice-index distance and is computed in integers.
    """
    t = np.asarray(true, dtype=np.int64)
    e = np.asarray(estimated, dtype=np.int64)
    e = np.where(e == UNSET_SLICE, 1, e)
    if spec.is_uniform:
        return float(np.sum(np.abs(t - e)))
    b = spec.as_array()
    lo_t, hi_t = b[t - 1], b[t]
    lo_e, hi_e = b[e - 1], b[e]
    return float(np.sum(np.abs((hi_t + lo_t) / 2 - (hi_e + lo_e) / 2) / (hi_t - lo_t)))


@numba.njit(cache=True)
def local_indices(attrs, rvals, ids):
    """1-based positions of every element in the local attribute and random
    sequences (ties by id)."""
    n = attrs.shape[0]
    la = np.ones(n, dtype=np.int64)
    lr = np.ones(n, dtype=np.int64)
    for p in range(n):
        for q in range(n):
            if q == p:
                continue
            if attrs[q] < attrs[p] or (attrs[q] == attrs[p] and ids[q] < ids[p]):
                la[p] += 1
            if rvals[q] < rvals[p] or (rvals[q] == rvals[p] and ids[q] < ids[p]):
                lr[p] += 1
    return la, lr


@numba.njit(cache=True)
def ldm(attrs, rvals, ids, c):
    """Local disorder over a node's view plus itself, normalised by c + 1."""
    la, lr = local_indices(attrs, rvals, ids)
    total = 0
    for p in range(attrs.shape[0]):
        total += (la[p] - lr[p]) ** 2
    return total / (c + 1)


def summarize(spec: SliceSpec, ids: np.ndarray, attrs: np.ndarray, estimated: np.ndarray,
              rvals: Optional[np.ndarray] = None) -> tuple[Optional[float], float]:
    """(GDM or None, SDM) for one end-of-cycle snapshot of the live set."""
    g = None if rvals is None else gdm_of(attrs, rvals, ids)
    return g, sdm(true_slices(attrs, ids, spec), estimated, spec)
