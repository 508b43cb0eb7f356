import sys

import numpy as np
import pytest

from wallbench.oracle import OracleConfig, generate_dataset


@pytest.fixture(scope="session")
def small_ds():
    """Default DoE on a coarse 200-point surface."""
    return generate_dataset(cfg=OracleConfig(n_p=200))


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
        terminalreporter.write_line(line)
