import numpy as np
import pytest

from app.models.experiment import ExperimentConfig
from tests.helpers import experiment_config


@pytest.fixture
def fast_config(tmp_path) -> ExperimentConfig:
    return experiment_config(output_dir=str(tmp_path / "run"))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)
