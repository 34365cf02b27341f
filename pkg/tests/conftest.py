import sys

import numpy as np
import pytest
from hypothesis import settings

from lblnav.truthsim import DEFAULT_LANDMARKS, HelixTrajectory, NoiseConfig, simulate

# first calls into jitted kernels include compilation
settings.register_profile("lblnav", deadline=None)
settings.load_profile("lblnav")


@pytest.fixture(scope="session")
def landmarks():
    return DEFAULT_LANDMARKS.copy()


@pytest.fixture(scope="session")
def helix():
    return HelixTrajectory()


@pytest.fixture(scope="session")
def quiet_log(helix, landmarks):
    """Noise-free 120 s log on the default helix."""
    return simulate(helix, landmarks, NoiseConfig.zero(), 100, 1, 120.0, np.random.default_rng(0))


@pytest.fixture(scope="session")
def noisy_log(helix, landmarks):
    return simulate(helix, landmarks, NoiseConfig(), 100, 1, 120.0, np.random.default_rng(1))


def random_rotation(rng):
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("tests.test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
