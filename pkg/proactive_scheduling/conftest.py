import numpy as np
import pytest

from proactive_scheduling.apps.scheduling.channel import inverse_moments


@pytest.fixture(autouse=True)
def _output_dir(settings, tmp_path) -> None:
    settings.SIMULATION_OUTPUT_DIR = str(tmp_path / "results")


@pytest.fixture(autouse=True)
def _clear_moment_cache():
    yield
    inverse_moments.cache_clear()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)
