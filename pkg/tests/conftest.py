from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ggsmvif.pipeline import load_image

DATA = Path(__file__).parent / "data"

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def camera() -> np.ndarray:
    return load_image(DATA / "camera.png")


def random_spd(dim: int, rng: np.random.Generator, ridge: float = 0.5) -> np.ndarray:
    a = rng.standard_normal((dim, dim))
    return a @ a.T / dim + ridge * np.eye(dim)
