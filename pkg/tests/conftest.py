import numpy as np
import pytest

from flowee.config import CellConfig, FlowParams
from flowee.fixed_point import TrafficParams
from flowee.optimizer import OptimizerConfig
from flowee.rate_model import RateCurve, ZoneConfig


@pytest.fixture
def flat_curve():
    """R(rho) = 1 Mbps for any positive SINR."""
    return RateCurve.from_table([-100.0, 100.0], [1e6, 1e6])


@pytest.fixture
def single_zone():
    return CellConfig(
        zones=(ZoneConfig(1e-3, 1.0, "cell"),),
        traffic=TrafficParams(20000, 1e-3),
        flow=FlowParams(1e7, 0.01),
        b=0.1,
        n_max=4,
        optimizer=OptimizerConfig(multistart=0),
    )


@pytest.fixture
def two_zone():
    return CellConfig(
        zones=(ZoneConfig(1e-3, 0.1, "inner"), ZoneConfig(1e-3 / 3, 0.3, "outer")),
        traffic=TrafficParams(20000, 1e-3),
        flow=FlowParams(1e7, 0.01),
        b=0.1,
        n_max=4,
        optimizer=OptimizerConfig(multistart=0),
    )


def saturated_config(a, n_max, m=1):
    """Flat 1 Mbps curve and R_p far above it, so phi = 1 in every state.

    Each zone is offered ``a`` times the channel rate.
    """
    curve = RateCurve.from_table([-100.0, 100.0], [1e6, 1e6])
    zones = tuple(ZoneConfig(1e-3, a, f"z{j}") for j in range(m))
    return CellConfig(zones=zones, traffic=TrafficParams(1e7, 1.0), flow=FlowParams(1e6, 0.01),
                      b=0.1, n_max=n_max, curve=curve)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
