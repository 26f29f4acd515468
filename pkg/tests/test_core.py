import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from slicekit.core import (InFlightMessage, Network, SliceSpec, ViewEntry, attribute_rank,
                           sequence_ranks, slice_of)


def linear_scan_slice(bounds, x):
    # oracle: first k with b[k-1] < x <= b[k]
    for k in range(1, len(bounds)):
        if bounds[k - 1] < x <= bounds[k]:
            return k
    raise AssertionError("not covered")


def test_upper_boundary_is_inclusive():
    assert slice_of(SliceSpec.equal(2), 1.0) == 2


def test_intervals_are_half_open():
    assert slice_of(SliceSpec.equal(2), 0.5) == 1


def test_hundred_slices_at_0_803():
    spec = SliceSpec.equal(100)
    assert slice_of(spec, 0.803) == 81
    assert linear_scan_slice(spec.boundaries, 0.803) == 81


@pytest.mark.parametrize("x", [0.0, -0.1, 1.0000001, math.nan])
def test_slice_of_rejects_values_outside_unit_interval(x):
    with pytest.raises(ValueError):
        slice_of(SliceSpec.equal(4), x)


@pytest.mark.parametrize("bounds", [(0.0, 0.5), (0.1, 1.0), (0.0, 0.6, 0.4, 1.0), (0.0, 0.5, 0.5, 1.0), (0.0,)])
def test_slice_spec_validation(bounds):
    with pytest.raises(ValueError):
        SliceSpec(bounds)


def test_unequal_slices():
    spec = SliceSpec((0.0, 0.1, 0.5, 1.0))
    assert not spec.is_uniform
    assert [slice_of(spec, x) for x in (0.05, 0.1, 0.11, 0.5, 0.9)] == [1, 1, 2, 2, 3]
    assert spec.interval(2) == (0.1, 0.5)


def test_attribute_rank_worked_example():
    assert attribute_rank([(1, 50), (2, 120), (3, 25)]) == {1: 2, 2: 3, 3: 1}


def test_attribute_rank_single_node():
    assert attribute_rank([(7, 3.14)]) == {7: 1}


def test_attribute_rank_breaks_ties_by_id():
    assert attribute_rank([(2, 5), (1, 5)]) == {1: 1, 2: 2}


def test_attribute_rank_rejects_duplicate_ids():
    with pytest.raises(ValueError):
        attribute_rank([(1, 1.0), (1, 2.0)])


@given(st.lists(st.tuples(st.integers(0, 10**6), st.integers(-5, 5)), min_size=1, max_size=40,
                unique_by=lambda p: p[0]))
def test_attribute_rank_is_a_bijection(pop):
    ranks = attribute_rank(pop)
    assert sorted(ranks.values()) == list(range(1, len(pop) + 1))
    by_rank = sorted(pop, key=lambda p: ranks[p[0]])
    assert all((a[1], a[0]) < (b[1], b[0]) for a, b in zip(by_rank, by_rank[1:]))


@given(st.lists(st.tuples(st.integers(0, 50), st.floats(-1e6, 1e6)), min_size=1, max_size=30,
                unique_by=lambda p: p[0]))
def test_sequence_ranks_agree_with_attribute_rank(pop):
    ids = [i for i, _ in pop]
    vals = [a for _, a in pop]
    expected = attribute_rank(pop)
    assert list(sequence_ranks(vals, ids)) == [expected[i] for i in ids]


@given(st.integers(1, 200), st.floats(1e-9, 1.0), st.floats(1e-9, 1.0))
def test_slice_of_is_monotone(m, x, y):
    spec = SliceSpec.equal(m)
    lo, hi = min(x, y), max(x, y)
    assert slice_of(spec, lo) <= slice_of(spec, hi)


@given(st.integers(1, 300), st.integers(1, 10**4).flatmap(lambda q: st.tuples(st.integers(1, q), st.just(q))))
def test_equal_width_slice_is_ceiling(m, pq):
    p, q = pq
    # the exact rational p/q is compared, so float rounding cannot flip the answer
    assert slice_of(SliceSpec.equal(m), p / q) == math.ceil(Fraction(p, q) * m)


def test_node_ids_are_sequential_and_never_reused():
    net = Network(2, capacity=1)
    a, b = net.add_node(1.0), net.add_node(2.0)
    net.remove(a)
    c = net.add_node(3.0)
    assert (a, b, c) == (0, 1, 2)
    assert list(net.live_ids()) == [1, 2]
    assert not net.is_alive(a)


def test_network_grows_and_keeps_state():
    net = Network(3, window=4, capacity=1)
    for k in range(10):
        net.add_node(float(k), k / 10)
    net.set_view(0, [net.entry_for(5, age=2)])
    assert net.capacity >= 10
    assert net.view(0) == [ViewEntry(5, 2, 5.0, 0.5)]
    assert net.state.win.shape[1] == 4


@pytest.mark.parametrize("entries", [
    [ViewEntry(1, 0, 0.0, 0.0), ViewEntry(1, 1, 0.0, 0.0)],
    [ViewEntry(0, 0, 0.0, 0.0)],
    [ViewEntry(k, 0, 0.0, 0.0) for k in range(1, 4)],
])
def test_set_view_enforces_view_invariants(entries):
    net = Network(2, capacity=5)
    for k in range(5):
        net.add_node(float(k))
    with pytest.raises(ValueError):
        net.set_view(0, entries)


def test_messages_are_immutable():
    msg = InFlightMessage(0, 1, "REQ", (0.5, 3.0))
    with pytest.raises(AttributeError):
        msg.payload = (0.1, 3.0)
