import logging

import numpy as np

from app.core.exceptions import NumericalError
from app.models.metrics import FidelityReport
from app.models.propagation import DensityMatrix, TrajectoryRecord

logger = logging.getLogger(__name__)

PSD_TOLERANCE = 1e-8
PURITY_TOLERANCE = 1e-12
RANK_CUTOFF = 1e-14      # eigenvalues below this are treated as exact zeros


def _as_density(x) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.ndim == 1:
        return np.outer(x, x.conj())
    return x


def _clipped_eigh(rho: np.ndarray, name: str):
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    if w.min() < -PSD_TOLERANCE:
        message = f"{name} is not positive semidefinite (eigenvalue {w.min():.3e})"
        # simulated states fail numerically, references fail as bad input
        raise NumericalError(message) if name == "rho_exp" else ValueError(message)
    return np.where(w < RANK_CUTOFF, 0.0, w), v


def _is_pure(rho: np.ndarray) -> bool:
    return abs(np.real(np.trace(rho @ rho)) - 1.0) <= PURITY_TOLERANCE


def _sqrt_psd(rho: np.ndarray, name: str) -> np.ndarray:
    w, v = _clipped_eigh(rho, name)
    return (v * np.sqrt(w)) @ v.conj().T


def uhlmann_fidelity(rho_ideal: DensityMatrix, rho_exp: DensityMatrix) -> float:
    '''General path: F = Tr√(√ρ σ √ρ), evaluated as the trace norm of √ρ·√σ.'''
    rho = _as_density(rho_ideal)
    sigma = _as_density(rho_exp)
    if rho.shape != sigma.shape:
        raise ValueError(f"dimension mismatch: {rho.shape} vs {sigma.shape}")
    product = _sqrt_psd(rho, "rho_ideal") @ _sqrt_psd(sigma, "rho_exp")
    return float(np.clip(np.linalg.svd(product, compute_uv=False).sum(), 0.0, 1.0))


def pure_state_fidelity(psi, rho_exp: DensityMatrix) -> float:
    '''Reduction for a pure reference state: F = √⟨ψ|σ|ψ⟩.'''
    psi = np.asarray(psi, dtype=complex)
    sigma = _as_density(rho_exp)
    if sigma.shape[0] != psi.size:
        raise ValueError(f"dimension mismatch: {psi.size} vs {sigma.shape}")
    overlap = np.real(np.vdot(psi, sigma @ psi))
    return float(np.clip(np.sqrt(max(overlap, 0.0)), 0.0, 1.0))


def state_fidelity(rho_ideal: DensityMatrix, rho_exp: DensityMatrix) -> float:
    '''
    Uhlmann fidelity between a reference state and a simulated one.
    State vectors are accepted for either argument. A pure reference takes the √⟨ψ|σ|ψ⟩ shortcut.
    '''
    rho = _as_density(rho_ideal)
    sigma = _as_density(rho_exp)
    if rho.shape != sigma.shape:
        raise ValueError(f"dimension mismatch: {rho.shape} vs {sigma.shape}")
    if _is_pure(rho):
        _clipped_eigh(sigma, "rho_exp")
        _, v = np.linalg.eigh(rho)
        return pure_state_fidelity(v[:, -1], sigma)
    return uhlmann_fidelity(rho, sigma)


def cost(fidelity: float) -> float:
    if not -1e-12 <= fidelity <= 1.0 + 1e-12:
        raise ValueError(f"fidelity {fidelity} is outside [0, 1]")
    return float(min(1.0, max(0.0, 1.0 - fidelity)))


def transfer_report(traj: TrajectoryRecord, target_level: int = 2) -> FidelityReport:
    if traj.populations.size == 0:
        raise ValueError("empty trajectory")
    if not 0 <= target_level < traj.dim:
        raise ValueError(f"target level {target_level} outside a {traj.dim}-level system")
    target = np.zeros(traj.dim, dtype=complex)
    target[target_level] = 1.0
    fidelity = state_fidelity(target, traj.final_state)
    final = np.clip(np.asarray(traj.final_populations(), dtype=float), 0.0, 1.0)
    leakage = float(np.clip(final[3:].sum(), 0.0, 1.0))
    intermediate = float(np.max(traj.populations[:, 1])) if traj.dim > 1 else 0.0
    return FidelityReport(
        fidelity=fidelity,
        cost=1.0 - fidelity,
        final_populations=[float(p) for p in final],
        leakage=leakage,
        intermediate_peak=intermediate,
        target_level=target_level,
    )
