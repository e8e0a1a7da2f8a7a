import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from deepneurons import kernels  # noqa: E402
from deepneurons.model import Topology, init_network  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def jitter(net, rng, scale=0.3):
    """Push every parameter (biases included) off its initial value."""
    for d in (net.theta, net.phi):
        for v in d.values():
            v += rng.normal(scale=scale, size=v.shape)
    return net


@pytest.fixture
def small_net(rng):
    return jitter(init_network(Topology((1, 3, 2, 1), 2, ((0, 2), (1, 3))), "shared", 7), rng)


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    prev = kernels.BACKEND
    kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(prev)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for the terminal summary, then assert."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(name, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  {name}: {detail}"
        lines.append(line)
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
