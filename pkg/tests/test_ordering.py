from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_network, set_views
from slicekit import Protocol, SimConfig, Simulation, SliceSpec
from slicekit.metrics import gdm_of
from slicekit.ordering import (OrderingMode, gain, is_misplaced, ldm_of, select_partner,
                               send_request, swap_step)

SPEC = SliceSpec.equal(4)


# -------------------------------------------------------------- oracles

def local_positions(values, ids):
    order = sorted(range(len(ids)), key=lambda p: (values[p], ids[p]))
    pos = [0] * len(ids)
    for rank, p in enumerate(order, start=1):
        pos[p] = rank
    return pos


def oracle_ldm(ids, attrs, rvals, c):
    la = local_positions(attrs, ids)
    lr = local_positions(rvals, ids)
    return Fraction(sum((x - y) ** 2 for x, y in zip(la, lr)), c + 1)


def oracle_gain(net, i, j):
    """LDM of i's neighbourhood before minus after swapping r_i and r_j."""
    ids = [i] + [e.id for e in net.view(i)]
    attrs = [net.state.attr[i]] + [e.attr for e in net.view(i)]
    rvals = [net.state.rval[i]] + [e.rvalue for e in net.view(i)]
    before = oracle_ldm(ids, attrs, rvals, net.view_size)
    k = ids.index(j)
    rvals[0], rvals[k] = rvals[k], rvals[0]
    return before - oracle_ldm(ids, attrs, rvals, net.view_size)


def random_neighbourhood(rng, ties=False):
    size = int(rng.integers(2, 10))
    c = size - 1
    if ties:
        # ties in attributes only: tied random values let a swap move a
        # third node's id-broken index, which the closed form ignores
        attrs = rng.integers(0, 4, size).astype(float)
        rvals = rng.permutation(np.arange(1, size + 1)) / size
    else:
        attrs = rng.permutation(size).astype(float) * 10
        rvals = rng.permutation(np.arange(1, size + 1)) / size
    net = make_network(attrs, rvals=rvals, c=c)
    others = rng.permutation(np.arange(1, size))
    set_views(net, {0: [(int(j), int(rng.integers(0, 5))) for j in others]})
    return net


# -------------------------------------------------------------- predicate

def test_misplacement_examples():
    assert is_misplaced((50, 0.85), (120, 0.1))
    assert not is_misplaced((50, 0.85), (50, 0.85))
    assert not is_misplaced((25, 0.1), (50, 0.35))


@given(st.floats(0, 100), st.floats(0.01, 1), st.floats(0, 100), st.floats(0.01, 1))
def test_misplacement_is_symmetric(a_i, r_i, a_j, r_j):
    assert is_misplaced((a_i, r_i), (a_j, r_j)) == is_misplaced((a_j, r_j), (a_i, r_i))


# -------------------------------------------------------------- gain

def test_gain_hand_example():
    # local indices: i = (1, 3), k = (2, 2), j = (3, 1); c = 2
    net = make_network([1, 2, 3], rvals=[0.9, 0.5, 0.1], c=2)
    set_views(net, {0: [(1, 0), (2, 0)]})
    assert gain(net, 0, 2) == pytest.approx(8 / 3, abs=1e-12)
    assert oracle_gain(net, 0, 2) == Fraction(8, 3)


def test_gain_of_matching_pair_swaps_equal_indices():
    # i and j already agree; only a pair with equal local indices gives exactly 0
    net = make_network([1, 2, 3], rvals=[0.1, 0.5, 0.9], c=2)
    set_views(net, {0: [(1, 0), (2, 0)]})
    assert gain(net, 0, 1) < 0
    assert oracle_gain(net, 0, 1) == Fraction(gain(net, 0, 1)).limit_denominator(100)


def test_gain_rejects_non_neighbors():
    net = make_network([1, 2, 3], rvals=[0.1, 0.5, 0.9], c=2)
    set_views(net, {0: [(1, 0)]})
    with pytest.raises(ValueError):
        gain(net, 0, 2)


@pytest.mark.parametrize("ties", [False, True])
def test_gain_matches_brute_force_ldm_difference(ties):
    rng = np.random.default_rng(11 if ties else 12)
    for _ in range(100):
        net = random_neighbourhood(rng, ties)
        for e in net.view(0):
            want = oracle_gain(net, 0, e.id)
            assert gain(net, 0, e.id) == pytest.approx(float(want), abs=1e-12)


def test_closed_form_gain_assumes_distinct_random_values():
    # r_j equals r_k: after the swap i and k trade places in the id tie-break
    net = make_network([0, 1, 2], rvals=[0.9, 0.5, 0.5], c=2)
    set_views(net, {0: [(1, 0), (2, 0)]})
    assert float(oracle_gain(net, 0, 2)) != pytest.approx(gain(net, 0, 2))


def test_ldm_of_matches_oracle():
    rng = np.random.default_rng(5)
    for _ in range(50):
        net = random_neighbourhood(rng, ties=True)
        ids = [0] + [e.id for e in net.view(0)]
        attrs = [net.state.attr[0]] + [e.attr for e in net.view(0)]
        rvals = [net.state.rval[0]] + [e.rvalue for e in net.view(0)]
        assert ldm_of(net, 0) == pytest.approx(float(oracle_ldm(ids, attrs, rvals, net.view_size)))


# -------------------------------------------------------------- partner choice

@pytest.mark.parametrize("ties", [False, True])
def test_mod_jk_partner_is_brute_force_argmax(ties):
    rng = np.random.default_rng(21 if ties else 22)
    for _ in range(100):
        net = random_neighbourhood(rng, ties)
        gains = [oracle_gain(net, 0, e.id) for e in net.view(0)]
        best = max(gains)
        # view order, later entries win ties
        want = [e.id for e, g in zip(net.view(0), gains) if g == best][-1]
        assert select_partner(net, 0, OrderingMode.MOD_JK) == want


@pytest.mark.parametrize("mode", list(OrderingMode))
def test_single_misplaced_neighbor_is_chosen(mode, rng):
    # only node 3 disagrees with node 0
    net = make_network([5, 1, 2, 9, 8], rvals=[0.5, 0.1, 0.2, 0.3, 0.9], c=4)
    set_views(net, {0: [(1, 0), (2, 1), (3, 2), (4, 3)]})
    for _ in range(20):
        assert select_partner(net, 0, mode, rng) == 3


def test_jk_is_uniform_over_misplaced_neighbors(rng):
    net = make_network([5, 1, 9, 2, 8], rvals=[0.5, 0.9, 0.1, 0.2, 0.7], c=4)
    set_views(net, {0: [(1, 0), (2, 0), (3, 0), (4, 0)]})
    counts = Counter(select_partner(net, 0, OrderingMode.JK, rng) for _ in range(4000))
    assert set(counts) == {1, 2}
    assert abs(counts[1] - 2000) < 4 * np.sqrt(1000)


def test_jk_without_misplaced_neighbor_picks_any(rng):
    net = make_network([1, 2, 3, 4], rvals=[0.1, 0.2, 0.3, 0.4], c=3)
    set_views(net, {0: [(1, 0), (2, 0), (3, 0)]})
    counts = Counter(select_partner(net, 0, OrderingMode.JK, rng) for _ in range(3000))
    assert set(counts) == {1, 2, 3}
    assert min(counts.values()) > 800


def test_all_placed_mod_jk_still_returns_a_harmless_partner():
    net = make_network([1, 2, 3, 4], rvals=[0.1, 0.2, 0.3, 0.4], c=3)
    set_views(net, {0: [(1, 0), (2, 0), (3, 0)]})
    j = select_partner(net, 0, OrderingMode.MOD_JK)
    assert j is not None
    assert gain(net, 0, j) < 0
    before = net.state.rval.copy(), net.state.slice_est.copy()
    out = swap_step(net, send_request(net, 0, j), SPEC)
    assert out.outcome == "no-op"
    assert np.array_equal(net.state.rval, before[0])


def test_empty_view_has_no_partner():
    net = make_network([1, 2], rvals=[0.1, 0.2], c=1)
    assert select_partner(net, 0, OrderingMode.MOD_JK) is None
    assert select_partner(net, 0, OrderingMode.JK, np.random.default_rng(0)) is None


# -------------------------------------------------------------- swaps

def test_swap_example():
    net = make_network([50, 120], rvals=[0.85, 0.1], c=1)
    out = swap_step(net, send_request(net, 0, 1), SPEC)
    assert out.swapped and out.outcome == "swapped"
    assert net.state.rval[:2].tolist() == [0.1, 0.85]
    assert net.state.slice_est[:2].tolist() == [1, 4]
    assert not is_misplaced((50, 0.1), (120, 0.85))


def test_ordered_pair_is_left_alone():
    net = make_network([50, 120], rvals=[0.1, 0.85], c=1)
    out = swap_step(net, send_request(net, 0, 1), SPEC)
    assert out.outcome == "no-op"
    assert net.state.rval[:2].tolist() == [0.1, 0.85]


def test_request_overtaken_by_receiver_swap_is_useless():
    # i = 0 targets j = 1; before delivery j swaps with k = 2 and now agrees with i
    net = make_network([1, 2, 0], rvals=[0.9, 0.5, 0.95], c=2)
    req = send_request(net, 0, 1, overlapping=True)
    assert swap_step(net, send_request(net, 1, 2), SPEC).swapped
    assert net.state.rval[1] == 0.95
    assert swap_step(net, req, SPEC).outcome == "no-op"
    assert sorted(net.state.rval[:3]) == [0.5, 0.9, 0.95]


def test_request_from_sender_that_swapped_meanwhile_is_useless():
    net = make_network([1, 2, 0], rvals=[0.9, 0.5, 0.95], c=2)
    req = send_request(net, 0, 1, overlapping=True)
    assert swap_step(net, send_request(net, 2, 0), SPEC).swapped
    assert swap_step(net, req, SPEC).outcome == "no-op"
    assert sorted(net.state.rval[:3]) == [0.5, 0.9, 0.95]


def test_request_to_departed_node_is_dropped():
    net = make_network([1, 2], rvals=[0.9, 0.1], c=1)
    req = send_request(net, 0, 1)
    net.remove(1)
    assert swap_step(net, req, SPEC).outcome == "no-op"
    assert net.state.rval[0] == 0.9


@given(st.integers(2, 12).flatmap(lambda n: st.tuples(
    st.just(n),
    st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), min_size=1, max_size=40),
    st.randoms(use_true_random=False))))
def test_overlapping_requests_conserve_values(case):
    n, pairs, rnd = case
    attrs = [rnd.random() for _ in range(n)]
    rvals = [rnd.randint(1, 8) / 8 for _ in range(n)]
    net = make_network(attrs, rvals=rvals, c=1)
    # snapshot every request first, deliver them later in shuffled order
    reqs = [send_request(net, i, j, overlapping=True) for i, j in pairs if i != j]
    rnd.shuffle(reqs)
    for req in reqs:
        out = swap_step(net, req, SPEC)
        if out.swapped:
            a, b = req.src, req.dst
            assert not is_misplaced((net.state.attr[a], net.state.rval[a]),
                                    (net.state.attr[b], net.state.rval[b]))
    assert sorted(net.state.rval[:n]) == sorted(rvals)


@given(st.integers(3, 30), st.integers(0, 2**32 - 1))
def test_sequential_swaps_strictly_reduce_gdm(n, seed):
    rng = np.random.default_rng(seed)
    attrs = rng.random(n)
    rvals = 1.0 - rng.random(n)
    net = make_network(attrs, rvals=rvals, c=1)
    ids = np.arange(n)
    current = gdm_of(attrs, net.state.rval[:n], ids)
    for _ in range(200):
        i, j = rng.choice(n, 2, replace=False)
        if swap_step(net, send_request(net, int(i), int(j)), SPEC).swapped:
            after = gdm_of(attrs, net.state.rval[:n], ids)
            assert after < current
            current = after


@pytest.mark.parametrize("protocol", [Protocol.JK, Protocol.MOD_JK])
def test_sequential_run_sorts_the_random_values(protocol):
    cfg = SimConfig(n=300, c=10, slices=SliceSpec.equal(10), protocol=protocol,
                    cycles=400, seed=4, stop_when_sorted=True)
    sim = Simulation(cfg)
    gdms = [sim.step().gdm]
    while gdms[-1] > 0 and sim.cycle < cfg.cycles:
        gdms.append(sim.step().gdm)
    assert gdms[-1] == 0.0
    snap = sim.snapshot()
    assert np.array_equal(np.argsort(snap.attrs, kind="stable"), np.argsort(snap.rvals, kind="stable"))
