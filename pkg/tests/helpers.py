import math

import numpy as np

from app.models.experiment import ExperimentConfig

HALF_SQRT2 = 1 / math.sqrt(2)


def experiment_config(**overrides) -> ExperimentConfig:
    '''Short four-level run that keeps harness tests fast.'''
    data = {
        "protocol": "stirsap",
        "pulse": {"omega0": 2 * math.pi * 0.03, "total_time": 10.0},
        "propagation": {"frame": "rotating", "dt": 0.02, "record_stride": 5},
        "seed": 7,
    }
    data.update(overrides)
    return ExperimentConfig.model_validate(data)


def random_density(rng: np.random.Generator, dim: int = 4) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_state(rng: np.random.Generator, dim: int = 4) -> np.ndarray:
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return psi / np.linalg.norm(psi)


def random_unitary(rng: np.random.Generator, dim: int = 4) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))
    return q * (np.diag(r) / np.abs(np.diag(r)))
