import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.linalg import expm

from app.core.exceptions import NumericalError
from app.models.propagation import Frame, Method, PropagationConfig
from app.models.pulse import GaussianStirapParams, ProtocolVariant, ControlParams
from app.models.transmon import TWO_PI, TransmonSpec
from app.services.propagation import (
    propagate_lindblad,
    propagate_state,
    total_propagator,
    unitarity_defect,
    validate_density,
    validate_state,
)
from app.services.pulse_synthesis import cd_amplitude, gaussian_envelopes, make_protocol_schedule
from app.services.qudit_model import (
    basis_projector,
    collapse_operators,
    hamiltonian_function,
    ideal_hamiltonian_function,
)


def _constant(h: np.ndarray):
    h = np.asarray(h, dtype=complex)
    return lambda times: np.broadcast_to(h, (np.atleast_1d(times).size,) + h.shape).copy()


def _cd_hamiltonian(total_time: float = 32.0):
    pair = gaussian_envelopes(GaussianStirapParams(omega0=TWO_PI * 0.02, total_time=total_time))
    return ideal_hamiltonian_function(pair.p_env, pair.s_env, lambda t: cd_amplitude(pair, t))


def _ket(dim: int, level: int) -> np.ndarray:
    psi = np.zeros(dim, dtype=complex)
    psi[level] = 1.0
    return psi


def test_default_step_depends_on_frame():
    assert PropagationConfig().dt == 0.02
    assert PropagationConfig(frame=Frame.LAB).dt == 0.002
    assert PropagationConfig(frame="lab", dt=0.001).dt == 0.001


def test_step_longer_than_run_is_rejected():
    with pytest.raises(ValueError):
        PropagationConfig(dt=1.0).steps_for(0.5)


def test_state_validation():
    with pytest.raises(ValueError):
        validate_state(np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        validate_density(np.diag([0.5, 0.4]))
    with pytest.raises(ValueError):
        validate_density(np.diag([1.2, -0.2]))


def test_zero_hamiltonian_keeps_state(rng):
    psi0 = rng.normal(size=3) + 1j * rng.normal(size=3)
    psi0 /= np.linalg.norm(psi0)
    traj = propagate_state(_constant(np.zeros((3, 3))), psi0, 5.0, PropagationConfig(dt=0.1))
    assert_allclose(traj.final_state, psi0, atol=1e-14)
    assert traj.times[0] == 0.0 and traj.times[-1] == pytest.approx(5.0)


@pytest.mark.parametrize("method", list(Method))
def test_rabi_pi_pulse(method):
    omega = 1.0
    h = np.array([[0, omega / 2], [omega / 2, 0]])
    traj = propagate_state(_constant(h), _ket(2, 0), math.pi / omega, PropagationConfig(dt=0.01, method=method))
    assert traj.final_populations()[1] == pytest.approx(1.0, abs=1e-8)


def test_record_stride_keeps_first_and_last():
    traj = propagate_state(_constant(np.zeros((2, 2))), _ket(2, 0), 1.05, PropagationConfig(dt=0.01, record_stride=10))
    assert traj.times[0] == 0.0
    assert traj.times[-1] == pytest.approx(1.05)
    assert traj.populations.shape == (traj.times.size, 2)


def test_snapshots_are_optional():
    cfg = PropagationConfig(dt=0.1, keep_snapshots=True)
    traj = propagate_state(_constant(np.zeros((2, 2))), _ket(2, 1), 1.0, cfg)
    assert traj.snapshots.shape == (11, 2)
    assert propagate_state(_constant(np.zeros((2, 2))), _ket(2, 1), 1.0, PropagationConfig(dt=0.1)).snapshots is None


def test_dimension_mismatch_is_rejected():
    with pytest.raises(ValueError):
        propagate_state(_constant(np.zeros((3, 3))), _ket(2, 0), 1.0, PropagationConfig(dt=0.1))


def test_cd_oracle_converges():
    h_of_t = _cd_hamiltonian()
    coarse = propagate_state(h_of_t, _ket(3, 0), 32.0, PropagationConfig(dt=0.01))
    fine = propagate_state(h_of_t, _ket(3, 0), 32.0, PropagationConfig(dt=0.001))
    assert coarse.final_populations()[2] >= 0.9999
    assert_allclose(coarse.final_populations(), fine.final_populations(), atol=1e-8)


def test_piecewise_exponential_is_time_reversible():
    total_time = 16.0
    h_of_t = _cd_hamiltonian(total_time)
    cfg = PropagationConfig(dt=0.01, method=Method.PIECEWISE_EXPONENTIAL)
    forward = propagate_state(h_of_t, _ket(3, 0), total_time, cfg)

    def reversed_h(times):
        return -h_of_t(total_time - np.atleast_1d(times))

    back = propagate_state(reversed_h, forward.final_state / np.linalg.norm(forward.final_state), total_time, cfg)
    assert_allclose(back.final_state, _ket(3, 0), atol=1e-12)


def test_non_finite_hamiltonian_reports_step():
    def h_of_t(times):
        times = np.atleast_1d(times)
        h = np.zeros((times.size, 2, 2), dtype=complex)
        h[times > 1.0] = np.nan
        return h

    with pytest.raises(NumericalError) as exc_info:
        propagate_state(h_of_t, _ket(2, 0), 2.0, PropagationConfig(dt=0.1))
    assert exc_info.value.step_index == 10
    assert "step 10" in str(exc_info.value)


# --- propagators ---

def test_total_propagator_of_zero_is_identity():
    u = total_propagator(_constant(np.zeros((3, 3))), 3.0, PropagationConfig(dt=0.1))
    assert_allclose(u, np.eye(3), atol=1e-15)


def test_total_propagator_matches_expm(rng):
    g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    h = 0.5 * (g + g.conj().T)
    u = total_propagator(_constant(h), 2.0, PropagationConfig(dt=0.05))
    assert_allclose(u, expm(-1j * h * 2.0), atol=1e-9)


def test_propagator_column_matches_state_evolution():
    h_of_t = _cd_hamiltonian(16.0)
    cfg = PropagationConfig(dt=0.01)
    u = total_propagator(h_of_t, 16.0, cfg)
    traj = propagate_state(h_of_t, _ket(3, 0), 16.0, cfg)
    assert_allclose(u[:, 0], traj.final_state, atol=1e-10)
    assert unitarity_defect(u) <= 1e-9


def test_rotating_frame_propagator_is_unitary():
    spec = TransmonSpec(level_count=4)
    params = GaussianStirapParams(omega0=TWO_PI * 0.03, total_time=20.0)
    schedule = make_protocol_schedule(ProtocolVariant.STIRSAP, params, None, spec)
    u = total_propagator(hamiltonian_function(spec, schedule, Frame.ROTATING), 20.0, PropagationConfig())
    assert unitarity_defect(u) <= 1e-9


# --- open system ---

def test_lindblad_without_channels_matches_closed_evolution():
    h_of_t = _cd_hamiltonian()
    cfg = PropagationConfig(dt=0.005)
    closed = propagate_state(h_of_t, _ket(3, 0), 32.0, cfg)
    opened = propagate_lindblad(h_of_t, [], basis_projector(3, 0), 32.0, cfg)
    assert_allclose(opened.final_populations(), closed.final_populations(), atol=1e-8)
    assert opened.is_density and not closed.is_density


def test_t1_decay():
    spec = TransmonSpec(level_count=2, t1_times=[100.0])
    traj = propagate_lindblad(
        _constant(np.zeros((2, 2))), collapse_operators(spec), basis_projector(2, 1), 100.0,
        PropagationConfig(dt=0.02, record_stride=100),
    )
    assert traj.final_populations()[1] == pytest.approx(math.exp(-1), abs=1e-4)


def test_lindblad_preserves_trace():
    spec = TransmonSpec(level_count=2, t1_times=[40.0], tphi_times=[80.0, 60.0])
    h = np.array([[0.0, 0.3], [0.3, 0.0]])
    traj = propagate_lindblad(
        _constant(h), collapse_operators(spec), basis_projector(2, 0), 500.0,
        PropagationConfig(dt=0.05, record_stride=50),
    )
    assert traj.norm_drift <= 1e-8
    assert traj.warnings == []
    assert np.trace(traj.final_state).real == pytest.approx(1.0, abs=1e-8)


def test_lindblad_stays_positive_with_coarse_steps():
    spec = TransmonSpec(level_count=3, t1_times=[2.0, 1.0], tphi_times=[5.0, 3.0, 2.0])
    h = np.array([[0.0, 4.0, 0.0], [4.0, -1.0, 3.0], [0.0, 3.0, 2.0]])
    traj = propagate_lindblad(
        _constant(h), collapse_operators(spec), basis_projector(3, 2), 20.0,
        PropagationConfig(dt=0.5, record_stride=1, keep_snapshots=True),
    )
    for rho in traj.snapshots:
        assert np.linalg.eigvalsh(rho).min() >= -1e-12
        assert np.trace(rho).real == pytest.approx(1.0, abs=1e-10)


def test_lindblad_accepts_rk4_setting():
    h_of_t = _cd_hamiltonian()
    magnus = propagate_lindblad(h_of_t, [], basis_projector(3, 0), 32.0, PropagationConfig(dt=0.01))
    rk4 = propagate_lindblad(h_of_t, [], basis_projector(3, 0), 32.0, PropagationConfig(dt=0.01, method=Method.RK4))
    assert_allclose(rk4.final_state, magnus.final_state, atol=1e-12)


def test_decay_lowers_an_exact_transfer():
    h_of_t = _cd_hamiltonian()
    cfg = PropagationConfig(dt=0.01, record_stride=1000)
    closed = propagate_lindblad(h_of_t, [], basis_projector(3, 0), 32.0, cfg)
    spec = TransmonSpec(level_count=3, t1_times=[50.0, 50.0])
    lossy = propagate_lindblad(h_of_t, collapse_operators(spec), basis_projector(3, 0), 32.0, cfg)
    assert closed.final_populations()[2] >= 0.9999
    assert lossy.final_populations()[2] < closed.final_populations()[2] - 0.01


def test_collapse_operator_shape_is_checked():
    with pytest.raises(ValueError):
        propagate_lindblad(_constant(np.zeros((2, 2))), [(np.eye(3), 1.0)], basis_projector(2, 0), 1.0,
                           PropagationConfig(dt=0.1))


# --- step-size convergence ---

@pytest.mark.parametrize("variant", list(ProtocolVariant))
def test_halving_the_step_barely_moves_populations(variant):
    spec = TransmonSpec(level_count=4)
    params = GaussianStirapParams(omega0=TWO_PI * 0.02, total_time=50.0)
    control = ControlParams(alpha_p=1.05, alpha_s=0.95, beta_p=0.01, beta_s=-0.01)
    schedule = make_protocol_schedule(variant, params, control, spec)
    h_of_t = hamiltonian_function(spec, schedule, Frame.ROTATING)
    psi0 = _ket(4, 0)
    coarse = propagate_state(h_of_t, psi0, 50.0, PropagationConfig(dt=0.02, record_stride=100))
    fine = propagate_state(h_of_t, psi0, 50.0, PropagationConfig(dt=0.01, record_stride=100))
    assert_allclose(coarse.final_populations(), fine.final_populations(), atol=1e-6)


@pytest.mark.slow
def test_lab_and_rotating_frames_agree():
    spec = TransmonSpec(level_count=4)
    params = GaussianStirapParams(omega0=TWO_PI * 0.02, total_time=50.0)
    schedule = make_protocol_schedule(ProtocolVariant.STIRAP, params, None, spec)
    rotating = propagate_state(
        hamiltonian_function(spec, schedule, Frame.ROTATING), _ket(4, 0), 50.0,
        PropagationConfig(frame=Frame.ROTATING, record_stride=100),
    )
    lab = propagate_state(
        hamiltonian_function(spec, schedule, Frame.LAB), _ket(4, 0), 50.0,
        PropagationConfig(frame=Frame.LAB, record_stride=1000),
    )
    assert_allclose(lab.final_populations(), rotating.final_populations(), atol=2e-3)
