"""Deterministic cycle-based simulator.

Each cycle: (1) scheduled churn is applied; (2) every live node, in a fresh
seeded permutation, refreshes its view and then runs its protocol's active
step; (3) messages are delivered according to the concurrency mode; (4) the
observer records GDM/SDM on the end-of-cycle state.

Concurrency. A non-overlapping message is handled on the spot, before the
next node acts. An overlapping one carries a snapshot of the sender's values
taken at send time and is delivered after every node has acted, in seeded
random order, against whatever the receiver holds by then. View exchanges
are always atomic.

Randomness. Every consumer has its own stream derived from the run seed:
the engine (activation order, churn victims, delivery order), attribute
generation, initial random values, and one stream per node id so that churn
never shifts the draws of unrelated nodes.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numba
import numpy as np

from .core import InFlightMessage, Network, NodeId, SliceSpec, slice_index  # noqa: F401
from .metrics import CycleMetrics, gdm_of, sdm, true_slices
from .ordering import JK, MOD_JK, choose_partner, deliver_request
from .ranking import DEFAULT_WINDOW, ranking_step, receive_update
from .sampling import SamplingMode, cyclon_exchange, fill_uniform_view, sync_entries

logger = logging.getLogger(__name__)


class Protocol(enum.Enum):
    JK = "jk"
    MOD_JK = "mod-jk"
    RANKING = "ranking"
    RANKING_WINDOW = "ranking-window"

    @property
    def is_ordering(self) -> bool:
        return self in (Protocol.JK, Protocol.MOD_JK)


class Concurrency(enum.IntEnum):
    NONE = 0
    HALF = 1
    FULL = 2


class ChurnCorrelation(enum.Enum):
    ATTRIBUTE = "correlated"  # lowest attributes leave, joiners exceed the maximum
    UNIFORM = "uniform"


@dataclass(frozen=True)
class ChurnSchedule:
    """Churn events at cycles first, first + period, ... up to last (inclusive).
    Each event removes floor(leave_rate * n) and adds floor(join_rate * n)
    nodes, n being the live count before the event."""

    leave_rate: float = 0.0
    join_rate: float = 0.0
    event_period: int = 1
    first_cycle: int = 1
    last_cycle: Optional[int] = None
    correlation: ChurnCorrelation = ChurnCorrelation.ATTRIBUTE

    def __post_init__(self) -> None:
        for rate in (self.leave_rate, self.join_rate):
            if not 0.0 <= rate < 1.0:
                raise ValueError("churn rates must lie in [0, 1)")
        if self.event_period < 1:
            raise ValueError("churn event period must be at least 1 cycle")

    @property
    def enabled(self) -> bool:
        return self.leave_rate > 0 or self.join_rate > 0

    def fires_at(self, cycle: int) -> bool:
        if not self.enabled or cycle < self.first_cycle:
            return False
        if self.last_cycle is not None and cycle > self.last_cycle:
            return False
        return (cycle - self.first_cycle) % self.event_period == 0

    def quiet_after(self, cycle: int) -> bool:
        """No event fires after `cycle`."""
        return not self.enabled or (self.last_cycle is not None and cycle >= self.last_cycle)


ATTRIBUTE_DISTRIBUTIONS: dict[str, Callable[[np.random.Generator, int], np.ndarray]] = {
    "uniform": lambda rng, k: rng.random(k),
    "exponential": lambda rng, k: rng.exponential(1.0, k),
    "lognormal": lambda rng, k: rng.lognormal(0.0, 1.0, k),
    "pareto": lambda rng, k: rng.pareto(1.5, k),
}


@dataclass(frozen=True)
class SimConfig:
    n: int
    c: int
    slices: SliceSpec
    protocol: Protocol
    cycles: int
    seed: int = 0
    sampling: SamplingMode = SamplingMode.CYCLON
    concurrency: Concurrency = Concurrency.NONE
    churn: ChurnSchedule = field(default_factory=ChurnSchedule)
    attr_dist: str = "uniform"
    window: int = DEFAULT_WINDOW
    # ordering only: end the run at the first sorted cycle once churn is over
    stop_when_sorted: bool = False

    def __post_init__(self) -> None:
        if not self.n > self.c >= 1:
            raise ValueError(f"need n > c >= 1, got n={self.n}, c={self.c}")
        if self.cycles < 1:
            raise ValueError("cycles must be at least 1")
        if self.attr_dist not in ATTRIBUTE_DISTRIBUTIONS:
            raise ValueError(f"unknown attribute distribution {self.attr_dist!r}")
        if self.protocol is Protocol.RANKING_WINDOW and self.window < 1:
            raise ValueError("window capacity must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def with_(self, **changes) -> SimConfig:
        return replace(self, **changes)


class SimulationAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class Snapshot:
    ids: np.ndarray
    attrs: np.ndarray
    rvals: np.ndarray
    estimated: np.ndarray
    true: np.ndarray


@dataclass
class RunResult:
    config: SimConfig
    metrics: list[CycleMetrics]
    final: Snapshot

    @property
    def sdm(self) -> np.ndarray:
        return np.array([m.sdm for m in self.metrics])

    @property
    def gdm(self) -> np.ndarray:
        return np.array([np.nan if m.gdm is None else m.gdm for m in self.metrics])


# ---------------------------------------------------------------- streams

_ENGINE, _NODE, _ATTRS, _RVALUES = 0, 1, 2, 3


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


class NodeDraws:
    """Per-node uniform streams, pre-drawn into a buffer the kernels consume."""

    def __init__(self, seed: int, block: int = 512):
        self.seed = seed
        self.block = block
        self.gens: list[np.random.Generator] = []
        self.buf = np.zeros((0, block))
        self.cur = np.zeros(0, dtype=np.int64)

    def add(self) -> np.random.Generator:
        i = len(self.gens)
        gen = _stream(self.seed, _NODE, i)
        self.gens.append(gen)
        if i >= self.buf.shape[0]:
            cap = max(16, 2 * self.buf.shape[0])
            buf = np.zeros((cap, self.block))
            cur = np.full(cap, self.block, dtype=np.int64)
            buf[: self.buf.shape[0]] = self.buf
            cur[: self.cur.shape[0]] = self.cur
            self.buf, self.cur = buf, cur
        self.cur[i] = self.block  # empty until first top-up
        return gen

    def top_up(self, ids: np.ndarray, need: int) -> None:
        low = ids[self.block - self.cur[ids] < need]
        for i in low:
            rest = self.block - self.cur[i]
            self.buf[i, :rest] = self.buf[i, self.cur[i]:]
            self.buf[i, rest:] = self.gens[i].random(self.block - rest)
            self.cur[i] = 0


# ---------------------------------------------------------------- kernels

@numba.njit(cache=True)
def _refresh_view(s, i, sampling, live, c, buf, cur):
    if sampling == 0:
        _, sent = cyclon_exchange(s, i, c)
        sync_entries(s, i)
        return sent
    fill_uniform_view(s, i, live, c, buf[i, cur[i]:cur[i] + c])
    cur[i] += c
    return 0


@numba.njit(cache=True)
def _ordering_cycle(s, order, live, mode, conc, sampling, c, bounds, buf, cur,
                    m_src, m_dst, m_a, m_r, m_exp):
    messages = 0
    attempts = 0
    unsuccessful = 0
    view_msgs = 0
    deferred = 0
    for i in order:
        view_msgs += _refresh_view(s, i, sampling, live, c, buf, cur)
        u = 0.0
        if mode == JK:
            u = buf[i, cur[i]]
            cur[i] += 1
        k, expected = choose_partner(s, i, mode, u, c)
        if k < 0:
            continue
        j = s.view_id[i, k]
        overlap = conc == 2
        if conc == 1:
            overlap = buf[i, cur[i]] < 0.5
            cur[i] += 1
        messages += 1
        if expected:
            attempts += 1
        if overlap:
            m_src[deferred] = i
            m_dst[deferred] = j
            m_a[deferred] = s.attr[i]
            m_r[deferred] = s.rval[i]
            m_exp[deferred] = expected
            deferred += 1
            continue
        if not s.alive[j]:
            if expected:
                unsuccessful += 1
            continue
        messages += 1  # ACK
        ok = deliver_request(s, i, j, s.attr[i], s.rval[i], bounds)
        if expected and not ok:
            unsuccessful += 1
    return messages, attempts, unsuccessful, view_msgs, deferred


@numba.njit(cache=True)
def _ordering_deliver(s, perm, bounds, m_src, m_dst, m_a, m_r, m_exp):
    messages = 0
    unsuccessful = 0
    for q in perm:
        j = m_dst[q]
        if not s.alive[j]:
            if m_exp[q]:
                unsuccessful += 1
            continue
        messages += 1  # ACK
        ok = deliver_request(s, m_src[q], j, m_a[q], m_r[q], bounds)
        if m_exp[q] and not ok:
            unsuccessful += 1
    return messages, unsuccessful


@numba.njit(cache=True)
def _ranking_cycle(s, order, live, conc, sampling, c, bounds, window, buf, cur,
                   m_dst, m_a):
    messages = 0
    view_msgs = 0
    deferred = 0
    for i in order:
        view_msgs += _refresh_view(s, i, sampling, live, c, buf, cur)
        u = buf[i, cur[i]]
        cur[i] += 1
        j1, j2 = ranking_step(s, i, bounds, window, u)
        if j1 < 0:
            continue
        for j in (j1, j2):
            messages += 1
            overlap = conc == 2
            if conc == 1:
                overlap = buf[i, cur[i]] < 0.5
                cur[i] += 1
            if overlap:
                m_dst[deferred] = j
                m_a[deferred] = s.attr[i]
                deferred += 1
            else:
                receive_update(s, j, s.attr[i], bounds, window)
    return messages, view_msgs, deferred


@numba.njit(cache=True)
def _ranking_deliver(s, perm, bounds, window, m_dst, m_a):
    for q in perm:
        receive_update(s, m_dst[q], m_a[q], bounds, window)


# ---------------------------------------------------------------- churn

def apply_churn(net: Network, schedule: ChurnSchedule, rng: np.random.Generator,
                attr_rng: np.random.Generator, attr_dist: str = "uniform") -> tuple[list[NodeId], list[NodeId]]:
    """Remove and add nodes for one churn event; returns (left, joined).
    Joiners get attributes only; protocol state and views are the caller's job."""
    live = net.live_ids()
    n = live.size
    n_leave = math.floor(schedule.leave_rate * n + 1e-9)
    n_join = math.floor(schedule.join_rate * n + 1e-9)
    s = net.state
    if schedule.correlation is ChurnCorrelation.ATTRIBUTE:
        order = np.lexsort((live, s.attr[live]))
        leaving = live[order[:n_leave]]
    else:
        leaving = rng.choice(live, size=n_leave, replace=False) if n_leave else live[:0]
    for i in leaving:
        net.remove(int(i))
    joined = []
    if schedule.correlation is ChurnCorrelation.ATTRIBUTE:
        top = float(np.max(s.attr[net.live_ids()])) if n_join else 0.0
        for _ in range(n_join):
            top += 1.0 - attr_rng.random()  # strictly increasing, steps in (0, 1]
            joined.append(net.add_node(top))
    else:
        for a in ATTRIBUTE_DISTRIBUTIONS[attr_dist](attr_rng, n_join):
            joined.append(net.add_node(float(a)))
    return [int(i) for i in leaving], joined


# ---------------------------------------------------------------- driver

class Simulation:
    def __init__(self, config: SimConfig):
        self.config = config
        cfg = config
        self.protocol = cfg.protocol
        self.window = cfg.window if cfg.protocol is Protocol.RANKING_WINDOW else 0
        self.net = Network(cfg.c, window=self.window, capacity=cfg.n + 16)
        self.bounds = cfg.slices.as_array()
        self.engine_rng = _stream(cfg.seed, _ENGINE)
        self.attr_rng = _stream(cfg.seed, _ATTRS)
        rvalue_rng = _stream(cfg.seed, _RVALUES)
        self.draws = NodeDraws(cfg.seed)
        self.cycle = 0
        self.metrics: list[CycleMetrics] = []
        self._msg_cap = 0

        attrs = ATTRIBUTE_DISTRIBUTIONS[cfg.attr_dist](self.attr_rng, cfg.n)
        rvalues = 1.0 - rvalue_rng.random(cfg.n)  # (0, 1]
        for a, r in zip(attrs, rvalues):
            i = self.net.add_node(float(a), float(r) if self.protocol.is_ordering else math.nan)
            self.draws.add()
        live = self.net.live_ids()
        for i in live:
            self._bootstrap_view(int(i), live)

    def _bootstrap_view(self, i: NodeId, live: np.ndarray) -> None:
        us = self.draws.gens[i].random(self.config.c)
        fill_uniform_view(self.net.state, i, live, self.config.c, us)

    def _churn(self) -> None:
        cfg = self.config
        left, joined = apply_churn(self.net, cfg.churn, self.engine_rng, self.attr_rng, cfg.attr_dist)
        for i in joined:
            gen = self.draws.add()
            if self.protocol.is_ordering:
                self.net.state.rval[i] = 1.0 - gen.random()
        live = self.net.live_ids()
        for i in joined:
            self._bootstrap_view(i, live)
        logger.debug("cycle %d: %d left, %d joined", self.cycle, len(left), len(joined))

    def _messages(self, k: int) -> None:
        if k > self._msg_cap:
            self._msg_cap = 2 * k
            cap = self._msg_cap
            self.m_src = np.zeros(cap, dtype=np.int64)
            self.m_dst = np.zeros(cap, dtype=np.int64)
            self.m_a = np.zeros(cap)
            self.m_r = np.zeros(cap)
            self.m_exp = np.zeros(cap, dtype=np.bool_)

    def step(self) -> CycleMetrics:
        cfg = self.config
        self.cycle += 1
        if cfg.churn.fires_at(self.cycle):
            self._churn()
        live = self.net.live_ids()
        if live.size <= cfg.c:
            raise SimulationAborted(
                f"cycle {self.cycle}: only {live.size} live nodes left for view size {cfg.c}")
        self.draws.top_up(live, cfg.c + 4)
        order = self.engine_rng.permutation(live)
        self._messages(2 * live.size)
        s = self.net.state
        buf, cur = self.draws.buf, self.draws.cur
        sampling, conc = int(cfg.sampling), int(cfg.concurrency)
        attempts = unsuccessful = 0
        if self.protocol.is_ordering:
            mode = MOD_JK if self.protocol is Protocol.MOD_JK else JK
            messages, attempts, unsuccessful, view_msgs, deferred = _ordering_cycle(
                s, order, live, mode, conc, sampling, cfg.c, self.bounds, buf, cur,
                self.m_src, self.m_dst, self.m_a, self.m_r, self.m_exp)
            if deferred:
                perm = self.engine_rng.permutation(deferred)
                acks, late_fail = _ordering_deliver(
                    s, perm, self.bounds, self.m_src, self.m_dst, self.m_a, self.m_r, self.m_exp)
                messages += acks
                unsuccessful += late_fail
        else:
            messages, view_msgs, deferred = _ranking_cycle(
                s, order, live, conc, sampling, cfg.c, self.bounds, self.window, buf, cur,
                self.m_dst, self.m_a)
            if deferred:
                perm = self.engine_rng.permutation(deferred)
                _ranking_deliver(s, perm, self.bounds, self.window, self.m_dst, self.m_a)

        snap = self.snapshot(live)
        g = gdm_of(snap.attrs, snap.rvals, snap.ids) if self.protocol.is_ordering else None
        row = CycleMetrics(
            cycle=self.cycle,
            gdm=g,
            sdm=sdm(snap.true, snap.estimated, cfg.slices),
            messages_sent=int(messages),
            unsuccessful_swaps=int(unsuccessful),
            live_nodes=int(live.size),
            swap_attempts=int(attempts),
            view_messages=int(view_msgs),
        )
        self.metrics.append(row)
        return row

    def snapshot(self, live: Optional[np.ndarray] = None) -> Snapshot:
        if live is None:
            live = self.net.live_ids()
        s = self.net.state
        attrs = s.attr[live].copy()
        rvals = s.rval[live].copy()
        est = s.slice_est[live].copy()
        if self.protocol.is_ordering:
            unset = est == 0
            est[unset] = np.searchsorted(self.bounds, rvals[unset], side="left")
        return Snapshot(live.copy(), attrs, rvals, est, true_slices(attrs, live, self.config.slices))

    def run(self) -> RunResult:
        cfg = self.config
        while self.cycle < cfg.cycles:
            row = self.step()
            if (cfg.stop_when_sorted and row.gdm == 0.0
                    and cfg.churn.quiet_after(self.cycle)):
                break
        return RunResult(cfg, list(self.metrics), self.snapshot())


def run(config: SimConfig) -> RunResult:
    return Simulation(config).run()
