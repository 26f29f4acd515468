import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from slicekit.core import Network, ViewEntry

# numba compiles on first use, so the first example of a property can be slow
settings.register_profile("slicekit", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("slicekit")


def make_network(attrs, rvals=None, c=4, window=0):
    """Network with one node per attribute and empty views."""
    net = Network(c, window=window, capacity=len(attrs))
    for k, a in enumerate(attrs):
        net.add_node(float(a), float("nan") if rvals is None else float(rvals[k]))
    return net


def set_views(net, views):
    """views: {owner: [(id, age), ...]}; entries copy the neighbors' current values."""
    for i, entries in views.items():
        net.set_view(i, [net.entry_for(j, age) for j, age in entries])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# one line per acceptance criterion, echoed after the test session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1][1:].rstrip(":"))):
            terminalreporter.write_line(line)
