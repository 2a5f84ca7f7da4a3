import time

import pytest

from twinmix.explorer import Strategy, run_strategy
from twinmix.model import ModelSpec, simulate
from twinmix.nuts import SamplerConfig
from twinmix.optimizer import minimize
from twinmix.params import SIMULATION_TRUTH, from_natural, sampler_box


@pytest.fixture(scope="session")
def data():
    """The simulated 1200-pair dataset used throughout the suite."""
    return simulate(SIMULATION_TRUTH, seed=1)


@pytest.fixture(scope="session")
def fit(data):
    return minimize(from_natural(SIMULATION_TRUTH), data, ModelSpec(3))


@pytest.fixture(scope="session")
def start(fit):
    return fit.argmin


@pytest.fixture(scope="session")
def bounded_chain(data, start):
    """Full-length bounded-strategy chain (1000 iterations, 500 warmup)."""
    t = time.perf_counter()
    chain = run_strategy(Strategy.bounded(sampler_box(3)), start, data, ModelSpec(3),
                         SamplerConfig(seed=1))
    chain.meta["elapsed"] = time.perf_counter() - t
    return chain


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split()[1].rstrip("."))):
            terminalreporter.write_line(line)
