import math

import numpy as np
import pytest

from footnav.mathcore import quat_normalize


def random_quat(rng) -> np.ndarray:
    return quat_normalize(rng.normal(size=4))


def random_euler(rng, max_tilt=math.radians(80.0)):
    return (rng.uniform(-max_tilt, max_tilt), rng.uniform(-max_tilt, max_tilt), rng.uniform(-math.pi, math.pi))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance verdicts, repeated at the end of the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
