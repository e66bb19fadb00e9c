import logging
import math
from typing import Iterator, List, Sequence, Tuple

import numpy as np
from scipy.linalg import expm

from app.core.exceptions import NumericalError
from app.models.propagation import (
    DensityMatrix,
    Method,
    PropagationConfig,
    QuantumState,
    TimeDependentHamiltonian,
    TrajectoryRecord,
)

logger = logging.getLogger(__name__)

CHUNK_STEPS = 4096
TRACE_WARNING = 1e-6
UNITARITY_WARNING = 1e-9
_GAUSS_OFFSET = math.sqrt(3.0) / 6.0


def validate_state(psi: QuantumState, tol: float = 1e-9) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    if psi.ndim != 1:
        raise ValueError(f"state vector must be one-dimensional, got shape {psi.shape}")
    norm = float(np.vdot(psi, psi).real)
    if abs(norm - 1.0) > tol:
        raise ValueError(f"state is not normalized (‖ψ‖² = {norm:.12f})")
    return psi


def validate_density(rho: DensityMatrix, psd_tol: float = 1e-8) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got shape {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > 1e-10:
        raise ValueError("density matrix is not Hermitian")
    trace = np.trace(rho).real
    if abs(trace - 1.0) > 1e-8:
        raise ValueError(f"density matrix trace is {trace:.12f}, expected 1")
    if np.linalg.eigvalsh(rho).min() < -psd_tol:
        raise ValueError("density matrix has negative eigenvalues")
    return rho


def _hamiltonians(h_of_t: TimeDependentHamiltonian, times: np.ndarray, first_step: int) -> np.ndarray:
    h = np.asarray(h_of_t(times), dtype=complex)
    if h.ndim == 2:
        h = np.broadcast_to(h, (times.size,) + h.shape)
    bad = ~np.all(np.isfinite(h), axis=(-1, -2))
    if np.any(bad):
        raise NumericalError("non-finite Hamiltonian", step_index=first_step + int(np.argmax(bad)))
    return h


def _dimension(h_of_t: TimeDependentHamiltonian) -> int:
    return np.asarray(h_of_t(np.array([0.0]))).shape[-1]


def _expm_hermitian(h: np.ndarray, dt: float) -> np.ndarray:
    '''Batched exp(−i·H·dt) for Hermitian H via eigendecomposition.'''
    w, v = np.linalg.eigh(h)
    phases = np.exp(-1j * dt * w)
    return np.einsum("nij,nj,nkj->nik", v, phases, v.conj())


def _step_unitaries(
    h_of_t: TimeDependentHamiltonian, start: int, stop: int, dt: float, method: Method
) -> np.ndarray:
    t0 = np.arange(start, stop) * dt
    if method == Method.MAGNUS4:
        # two-point Gauss-Legendre samples, commutator correction keeps fourth order
        h1 = _hamiltonians(h_of_t, t0 + (0.5 - _GAUSS_OFFSET) * dt, start)
        h2 = _hamiltonians(h_of_t, t0 + (0.5 + _GAUSS_OFFSET) * dt, start)
        commutator = h2 @ h1 - h1 @ h2
        h_eff = 0.5 * (h1 + h2) - 1j * (math.sqrt(3.0) * dt / 12.0) * commutator
        h_eff = 0.5 * (h_eff + np.conj(np.swapaxes(h_eff, -1, -2)))
        return _expm_hermitian(h_eff, dt)
    # midpoint exponential
    return _expm_hermitian(_hamiltonians(h_of_t, t0 + 0.5 * dt, start), dt)


def _rk4_hamiltonians(h_of_t, start: int, stop: int, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    '''H on the step grid t_start..t_stop and on the midpoints, for RK4 stages.'''
    grid = _hamiltonians(h_of_t, np.arange(start, stop + 1) * dt, start)
    mids = _hamiltonians(h_of_t, (np.arange(start, stop) + 0.5) * dt, start)
    return grid, mids


def _chunks(n_steps: int) -> Iterator[Tuple[int, int]]:
    for start in range(0, n_steps, CHUNK_STEPS):
        yield start, min(n_steps, start + CHUNK_STEPS)


def _is_recorded(k: int, n_steps: int, stride: int) -> bool:
    return k % stride == 0 or k == n_steps


class _Recorder:
    '''Collects populations and optional snapshots at recorded steps.'''

    def __init__(self, cfg: PropagationConfig, dt: float, n_steps: int, density: bool):
        self.cfg, self.dt, self.n_steps, self.density = cfg, dt, n_steps, density
        self.times: List[float] = []
        self.populations: List[np.ndarray] = []
        self.snapshots: List[np.ndarray] = []
        self.drift = 0.0

    def offer(self, k: int, state: np.ndarray) -> None:
        if not _is_recorded(k, self.n_steps, self.cfg.record_stride):
            return
        if self.density:
            pops = np.real(np.diagonal(state)).copy()
            total = float(np.trace(state).real)
        else:
            pops = np.abs(state) ** 2
            total = float(pops.sum())
        self.drift = max(self.drift, abs(total - 1.0))
        self.times.append(k * self.dt)
        self.populations.append(pops)
        if self.cfg.keep_snapshots:
            self.snapshots.append(state.copy())

    def record(self, final_state: np.ndarray, warnings: Sequence[str] = ()) -> TrajectoryRecord:
        return TrajectoryRecord(
            times=np.asarray(self.times),
            populations=np.vstack(self.populations),
            snapshots=np.stack(self.snapshots) if self.snapshots else None,
            final_state=final_state,
            norm_drift=self.drift,
            warnings=list(warnings),
        )


def _check_finite(state: np.ndarray, k: int) -> None:
    if not np.all(np.isfinite(state)):
        raise NumericalError("non-finite state during propagation", step_index=k)


def propagate_state(
    h_of_t: TimeDependentHamiltonian, psi0: QuantumState, T: float, cfg: PropagationConfig
) -> TrajectoryRecord:
    '''
    Closed-system evolution from psi0 over [0, T].
    PIECEWISE_EXPONENTIAL and MAGNUS4 apply exact per-step exponentials; RK4 integrates
    the Schrödinger equation without renormalization so the norm drift measures its error.
    '''
    psi = validate_state(psi0).copy()
    dim = _dimension(h_of_t)
    if psi.size != dim:
        raise ValueError(f"state dimension {psi.size} does not match the Hamiltonian dimension {dim}")
    n_steps = cfg.steps_for(T)
    dt = T / n_steps
    recorder = _Recorder(cfg, dt, n_steps, density=False)
    recorder.offer(0, psi)

    for start, stop in _chunks(n_steps):
        if cfg.method == Method.RK4:
            grid, mids = _rk4_hamiltonians(h_of_t, start, stop, dt)
            # classic RK4 stages: grid point, two midpoints, next grid point
            for i in range(stop - start):
                k1 = -1j * (grid[i] @ psi)
                k2 = -1j * (mids[i] @ (psi + 0.5 * dt * k1))
                k3 = -1j * (mids[i] @ (psi + 0.5 * dt * k2))
                k4 = -1j * (grid[i + 1] @ (psi + dt * k3))
                psi = psi + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
                _check_finite(psi, start + i)
                recorder.offer(start + i + 1, psi)
        else:
            unitaries = _step_unitaries(h_of_t, start, stop, dt, cfg.method)
            for i in range(stop - start):
                psi = unitaries[i] @ psi
                _check_finite(psi, start + i)
                recorder.offer(start + i + 1, psi)

    warnings = []
    if recorder.drift > 1e-8:
        warnings.append(f"norm drift {recorder.drift:.3e}")
        logger.warning(f"Norm drift {recorder.drift:.3e} after {n_steps} {cfg.method.value} steps")
    return recorder.record(psi, warnings)


def _dissipator_map(jumps: List[np.ndarray], loss: np.ndarray, dt: float) -> np.ndarray:
    '''
    exp(dt·D) for D(ρ) = Σ LρL† − ½{L†L, ρ}, acting on row-major vec(ρ).
    The map is completely positive and trace preserving for any dt.
    '''
    dim = loss.shape[0]
    eye = np.eye(dim, dtype=complex)
    generator = -0.5 * (np.kron(loss, eye) + np.kron(eye, loss.T))
    for L in jumps:
        generator = generator + np.kron(L, L.conj())
    return expm(dt * generator)


def propagate_lindblad(
    h_of_t: TimeDependentHamiltonian,
    collapse: Sequence[Tuple[np.ndarray, float]],
    rho0: DensityMatrix,
    T: float,
    cfg: PropagationConfig,
) -> TrajectoryRecord:
    '''
    dρ/dt = −i[H, ρ] + Σ (LρL† − ½{L†L, ρ}) with L = rate·operator, by Strang splitting:
    exact unitary half step, exact dissipator step, exact unitary half step.
    Every factor is CPTP, so ρ stays positive semidefinite at any dt. The half steps use
    the configured exponential integrator (MAGNUS4 when RK4 is selected).
    The trace is never renormalized; drift above 1e−6 is flagged on the record.
    '''
    rho = validate_density(rho0).copy()
    dim = _dimension(h_of_t)
    if rho.shape[0] != dim:
        raise ValueError(f"density matrix dimension {rho.shape[0]} does not match the Hamiltonian dimension {dim}")
    jumps = []
    for op, rate in collapse:
        op = np.asarray(op, dtype=complex)
        if op.shape != (dim, dim):
            raise ValueError(f"collapse operator has shape {op.shape}, expected {(dim, dim)}")
        jumps.append(rate * op)
    loss = sum((L.conj().T @ L for L in jumps), np.zeros((dim, dim), dtype=complex))

    n_steps = cfg.steps_for(T)
    dt = T / n_steps
    method = Method.MAGNUS4 if cfg.method == Method.RK4 else cfg.method
    dissipate = _dissipator_map(jumps, loss, dt)
    recorder = _Recorder(cfg, dt, n_steps, density=True)
    recorder.offer(0, rho)

    for start, stop in _chunks(n_steps):
        # half-step unitaries on the grid of width dt/2: entries 2i and 2i+1 cover step i
        try:
            halves = _step_unitaries(h_of_t, 2 * start, 2 * stop, 0.5 * dt, method)
        except NumericalError as e:
            raise NumericalError("non-finite Hamiltonian", step_index=e.step_index // 2) from e
        for i in range(stop - start):
            first, second = halves[2 * i], halves[2 * i + 1]
            rho = first @ rho @ first.conj().T                         # H over [t, t + dt/2]
            rho = (dissipate @ rho.reshape(-1)).reshape(dim, dim)      # decay and dephasing over dt
            rho = second @ rho @ second.conj().T                       # H over [t + dt/2, t + dt]
            rho = 0.5 * (rho + rho.conj().T)
            _check_finite(rho, start + i)
            recorder.offer(start + i + 1, rho)

    warnings = []
    if recorder.drift > TRACE_WARNING:
        warnings.append(f"trace drift {recorder.drift:.3e}")
        logger.warning(f"Lindblad trace drift {recorder.drift:.3e} exceeds {TRACE_WARNING:g}")
    return recorder.record(rho, warnings)


def total_propagator(h_of_t: TimeDependentHamiltonian, T: float, cfg: PropagationConfig) -> np.ndarray:
    '''Ordered product of the per-step propagators over [0, T].'''
    dim = _dimension(h_of_t)
    n_steps = cfg.steps_for(T)
    dt = T / n_steps
    u = np.eye(dim, dtype=complex)
    for start, stop in _chunks(n_steps):
        if cfg.method == Method.RK4:
            grid, mids = _rk4_hamiltonians(h_of_t, start, stop, dt)
            for i in range(stop - start):
                k1 = -1j * (grid[i] @ u)
                k2 = -1j * (mids[i] @ (u + 0.5 * dt * k1))
                k3 = -1j * (mids[i] @ (u + 0.5 * dt * k2))
                k4 = -1j * (grid[i + 1] @ (u + dt * k3))
                u = u + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
                _check_finite(u, start + i)
        else:
            for i, step in enumerate(_step_unitaries(h_of_t, start, stop, dt, cfg.method)):
                u = step @ u
                _check_finite(u, start + i)
    defect = unitarity_defect(u)
    if defect > UNITARITY_WARNING:
        logger.warning(f"Propagator unitarity defect {defect:.3e}")
    return u


def unitarity_defect(u: np.ndarray) -> float:
    '''max |U†U − I| over entries.'''
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))
