import logging
import math
from typing import List, Optional, Tuple

import numpy as np

from app.models.propagation import DensityMatrix, Frame, QuantumState, TimeDependentHamiltonian
from app.models.pulse import PulseSchedule, ToneLabel
from app.models.transmon import EigenStructure, TransmonSpec

logger = logging.getLogger(__name__)

HERMITIAN_TOLERANCE = 1e-12

# Gell-Mann basis of su(3); Tr(λ_a λ_b) = 2δ_ab.
GELL_MANN = np.array([
    [[0, 1, 0], [1, 0, 0], [0, 0, 0]],
    [[0, -1j, 0], [1j, 0, 0], [0, 0, 0]],
    [[1, 0, 0], [0, -1, 0], [0, 0, 0]],
    [[0, 0, 1], [0, 0, 0], [1, 0, 0]],
    [[0, 0, -1j], [0, 0, 0], [1j, 0, 0]],
    [[0, 0, 0], [0, 0, 1], [0, 1, 0]],
    [[0, 0, 0], [0, 0, -1j], [0, 1j, 0]],
    np.diag([1, 1, -2]) / math.sqrt(3),
], dtype=complex)

# Which ladder transition each tone is tuned to.
TONE_TRANSITION = {ToneLabel.P: 1, ToneLabel.S: 2}


def check_hermitian(h: np.ndarray, tol: float = HERMITIAN_TOLERANCE) -> np.ndarray:
    '''Return h unchanged, or raise ValueError if any entry differs from its adjoint by more than tol.'''
    h = np.asarray(h)
    if h.shape[-1] != h.shape[-2]:
        raise ValueError(f"operator must be square, got shape {h.shape}")
    deviation = np.max(np.abs(h - np.conj(np.swapaxes(h, -1, -2)))) if h.size else 0.0
    if deviation > tol:
        raise ValueError(f"operator is not Hermitian (max deviation {deviation:.3e})")
    return h


def ideal_three_level_hamiltonian(omega_p, omega_s, phi=0.0) -> np.ndarray:
    '''
    Resonant three-level Λ Hamiltonian ½[Ω_p|0⟩⟨1| + Ω_s e^{−iφ}|1⟩⟨2| + h.c.].
    Arguments may be arrays of equal shape; the result then has shape (..., 3, 3).
    '''
    omega_p, omega_s, phi = np.broadcast_arrays(
        np.asarray(omega_p, dtype=float), np.asarray(omega_s, dtype=float), np.asarray(phi, dtype=float)
    )
    h = np.zeros(omega_p.shape + (3, 3), dtype=complex)
    coupling = 0.5 * omega_s * np.exp(-1j * phi)
    h[..., 0, 1] = 0.5 * omega_p
    h[..., 1, 0] = 0.5 * omega_p
    h[..., 1, 2] = coupling
    h[..., 2, 1] = np.conj(coupling)
    return h


def cd_hamiltonian(omega_cd) -> np.ndarray:
    '''
    Counter-diabatic term on the |0⟩↔|2⟩ transition, entry (0,2) = +iΩ_cd.
    In Gell-Mann form this is −Ω_cd·λ5, so cd_hamiltonian(−1) equals λ5.
    '''
    omega_cd = np.asarray(omega_cd, dtype=float)
    h = np.zeros(omega_cd.shape + (3, 3), dtype=complex)
    h[..., 0, 2] = 1j * omega_cd
    h[..., 2, 0] = -1j * omega_cd
    return h


def gell_mann_coefficients(h: np.ndarray) -> np.ndarray:
    '''Coefficients c_a with h = c_0·I + Σ c_a λ_a; returns the eight c_a = Tr(h λ_a)/2.'''
    h = check_hermitian(np.asarray(h, dtype=complex))
    if h.shape != (3, 3):
        raise ValueError(f"Gell-Mann decomposition needs a 3×3 matrix, got {h.shape}")
    return np.real(np.einsum("ij,aji->a", h, GELL_MANN)) / 2.0


def dark_bright_states(omega_p: float, omega_s: float, phi: float = 0.0) -> EigenStructure:
    if omega_p == 0 and omega_s == 0:
        raise ValueError("mixing angle is undefined when both drives vanish")
    theta = math.atan2(omega_p, omega_s)
    c, s = math.cos(theta), math.sin(theta)
    phase = np.exp(1j * phi)
    dark = np.array([c, 0.0, -s * phase], dtype=complex)
    bright_plus = np.array([s, 1.0, c * phase], dtype=complex) / math.sqrt(2)
    bright_minus = np.array([s, -1.0, c * phase], dtype=complex) / math.sqrt(2)
    return EigenStructure(
        theta=theta,
        phi=phi,
        dark=dark,
        bright_plus=bright_plus,
        bright_minus=bright_minus,
        bright_energy=0.5 * math.hypot(omega_p, omega_s),
    )


def _tone_amplitudes(spec: TransmonSpec, schedule: PulseSchedule, t: np.ndarray) -> List[Tuple[np.ndarray, float, float]]:
    '''(amplitude(t), carrier, phase) per tone, with the drive matrix-element scaling applied.'''
    out = []
    for tone in schedule.tones:
        amplitude = np.asarray(tone.envelope(t), dtype=float)
        if spec.normalize_drive:
            amplitude = amplitude / math.sqrt(TONE_TRANSITION[tone.label])
        out.append((amplitude, tone.carrier, tone.phase))
    return out


def _check_times(t: np.ndarray, total_time: float) -> None:
    slack = 1e-12 * max(1.0, total_time)
    if t.size and (t.min() < -slack or t.max() > total_time + slack):
        raise ValueError(f"time outside the schedule window [0, {total_time}] ns")


def lab_frame_hamiltonian(spec: TransmonSpec, schedule: PulseSchedule, t) -> np.ndarray:
    '''Lab-frame qudit Hamiltonian diag(ω_n) + Σ_j √j·Σ_k a_k(t)cos(ω_k t + φ_k)(|j−1⟩⟨j| + h.c.).'''
    times = np.atleast_1d(np.asarray(t, dtype=float))
    _check_times(times, schedule.total_time)
    d = spec.level_count
    h = np.zeros((times.size, d, d), dtype=complex)
    h[:, np.arange(d), np.arange(d)] = np.asarray(spec.level_freqs)
    drive = np.zeros(times.size)
    for amplitude, carrier, phase in _tone_amplitudes(spec, schedule, times):
        drive = drive + amplitude * np.cos(carrier * times + phase)
    for j in range(1, d):
        h[:, j - 1, j] = math.sqrt(j) * drive
        h[:, j, j - 1] = math.sqrt(j) * drive
    return h[0] if np.ndim(t) == 0 else h


def rotating_frame_hamiltonian(spec: TransmonSpec, schedule: PulseSchedule, t) -> np.ndarray:
    '''
    Interaction picture with respect to diag(ω_n), rotating-wave approximation per tone.
    Ladder entry (j−1, j) = Σ_k √j·a_k/2·exp(−i[(ω_j − ω_{j−1} − ω_k)t − φ_k]); the diagonal vanishes.
    '''
    times = np.atleast_1d(np.asarray(t, dtype=float))
    _check_times(times, schedule.total_time)
    d = spec.level_count
    h = np.zeros((times.size, d, d), dtype=complex)
    tones = _tone_amplitudes(spec, schedule, times)
    for j in range(1, d):
        gap = spec.transition_freq(j)
        entry = np.zeros(times.size, dtype=complex)
        for amplitude, carrier, phase in tones:
            entry = entry + 0.5 * math.sqrt(j) * amplitude * np.exp(-1j * ((gap - carrier) * times - phase))
        h[:, j - 1, j] = entry
        h[:, j, j - 1] = np.conj(entry)
    return h[0] if np.ndim(t) == 0 else h


def hamiltonian_function(spec: TransmonSpec, schedule: PulseSchedule, frame: Frame) -> TimeDependentHamiltonian:
    '''Vectorized H(t) for the propagators.'''
    builder = lab_frame_hamiltonian if Frame(frame) == Frame.LAB else rotating_frame_hamiltonian

    def h_of_t(times: np.ndarray) -> np.ndarray:
        return builder(spec, schedule, np.atleast_1d(times))

    return h_of_t


def ideal_hamiltonian_function(p_env, s_env, cd=None, phi: float = 0.0) -> TimeDependentHamiltonian:
    '''Three-level H(t) from two envelopes, optionally with the counter-diabatic term added.'''
    def h_of_t(times: np.ndarray) -> np.ndarray:
        times = np.atleast_1d(times)
        h = ideal_three_level_hamiltonian(p_env(times), s_env(times), phi)
        if cd is not None:
            h = h + cd_hamiltonian(cd(times))
        return h

    return h_of_t


def collapse_operators(spec: TransmonSpec) -> List[Tuple[np.ndarray, float]]:
    '''
    Lindblad channels as (operator, rate) pairs, L = rate·operator.
    Decay j→j−1 uses √j|j−1⟩⟨j| at rate 1/√T1_j; dephasing of level j uses |j⟩⟨j| at rate 1/√(2Tφ_j).
    '''
    d = spec.level_count
    channels: List[Tuple[np.ndarray, float]] = []
    for j, t1 in enumerate(spec.t1_times or [], start=1):
        if t1 <= 0:
            raise ValueError(f"T1 for level {j} must be positive")
        op = np.zeros((d, d), dtype=complex)
        op[j - 1, j] = math.sqrt(j)
        channels.append((op, 1.0 / math.sqrt(t1)))
    for j, tphi in enumerate(spec.tphi_times or []):
        if tphi <= 0:
            raise ValueError(f"Tφ for level {j} must be positive")
        op = np.zeros((d, d), dtype=complex)
        op[j, j] = 1.0
        channels.append((op, 1.0 / math.sqrt(2.0 * tphi)))
    return channels


def ground_state(spec: TransmonSpec, level: int = 0) -> QuantumState:
    psi = np.zeros(spec.level_count, dtype=complex)
    psi[level] = 1.0
    return psi


def basis_projector(dim: int, level: int) -> DensityMatrix:
    rho = np.zeros((dim, dim), dtype=complex)
    rho[level, level] = 1.0
    return rho


def initial_density_matrix(spec: TransmonSpec, thermal_pop1: Optional[float] = None) -> DensityMatrix:
    '''ρ0 = (1 − p)|0⟩⟨0| + p|1⟩⟨1| with p the residual thermal occupation of level 1.'''
    p = spec.thermal_pop1 if thermal_pop1 is None else thermal_pop1
    rho = np.zeros((spec.level_count, spec.level_count), dtype=complex)
    rho[0, 0] = 1.0 - p
    rho[1, 1] = p
    return rho
