import os

import numpy as np
import pytest

from rydparity import _kernels
from rydparity.encoding import ParityLayout
from rydparity.gate import GateCalibration
from rydparity.plaquette import PlaquetteConfig

V = 251.32741228718345  # 2 pi x 40 MHz in rad/us
FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def fixture_path(name: str) -> str:
    return os.path.join(FIXTURES, name)


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    _kernels.warmup()


@pytest.fixture(scope="session")
def config():
    return PlaquetteConfig(interaction=V)


@pytest.fixture(scope="session")
def calibration():
    """Committed eps=1e-3 calibration (see tools/make_fixtures.py)."""
    return GateCalibration.load(fixture_path("calibration_eps1e-3.json"))


@pytest.fixture(scope="session")
def layout_4x5():
    return ParityLayout.load(fixture_path("layout_4x5.json"))


def rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)
