import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from facegen.kernels import available_backends  # noqa: E402
from facegen.network import make_seeded_network  # noqa: E402


@pytest.fixture(params=available_backends())
def backend(request):
    from facegen.kernels import get_backend
    return get_backend(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def net_a():
    return make_seeded_network(42, "tiny-a")


@pytest.fixture(scope="session")
def net_desk():
    return make_seeded_network(42, "desk")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
