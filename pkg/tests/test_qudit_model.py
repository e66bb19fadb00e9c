import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from app.models.pulse import DriveTone, PulseSchedule, ToneLabel
from app.models.transmon import TWO_PI, TransmonSpec, ladder_frequencies
from app.services.qudit_model import (
    GELL_MANN,
    basis_projector,
    cd_hamiltonian,
    check_hermitian,
    collapse_operators,
    dark_bright_states,
    gell_mann_coefficients,
    ideal_three_level_hamiltonian,
    initial_density_matrix,
    lab_frame_hamiltonian,
    rotating_frame_hamiltonian,
)
from tests.helpers import HALF_SQRT2


def _constant(value: float):
    return lambda t: value * np.ones_like(np.asarray(t, dtype=float))


def _schedule(p_amp: float, s_amp: float, p_carrier: float, s_carrier: float, total_time: float = 10.0,
              p_phase: float = 0.0, s_phase: float = 0.0) -> PulseSchedule:
    return PulseSchedule(
        total_time=total_time,
        sample_step=0.01,
        tones=(
            DriveTone(label=ToneLabel.P, envelope=_constant(p_amp), carrier=p_carrier, phase=p_phase),
            DriveTone(label=ToneLabel.S, envelope=_constant(s_amp), carrier=s_carrier, phase=s_phase),
        ),
    )


# --- ideal three-level model ---

def test_zero_drive_gives_zero_hamiltonian():
    assert_allclose(ideal_three_level_hamiltonian(0.0, 0.0), np.zeros((3, 3)))


def test_unit_drive_entries():
    h = ideal_three_level_hamiltonian(1.0, 1.0)
    assert h[0, 1] == 0.5 and h[1, 2] == 0.5
    assert h[1, 0] == 0.5 and h[2, 1] == 0.5
    assert h[0, 2] == 0 and h[2, 0] == 0


def test_ideal_hamiltonian_is_vectorized():
    p = np.linspace(0, 1, 5)
    h = ideal_three_level_hamiltonian(p, 2 * p, 0.3)
    assert h.shape == (5, 3, 3)
    assert_allclose(h[3], ideal_three_level_hamiltonian(p[3], 2 * p[3], 0.3))


def test_ideal_spectrum(rng):
    for _ in range(200):
        p, s = rng.uniform(0, 2, size=2)
        phi = rng.uniform(-math.pi, math.pi)
        expected = np.sort([0.0, 0.5 * math.hypot(p, s), -0.5 * math.hypot(p, s)])
        assert_allclose(np.linalg.eigvalsh(ideal_three_level_hamiltonian(p, s, phi)), expected, atol=1e-12)


def test_cd_term_is_lambda5():
    assert_allclose(cd_hamiltonian(-1.0), GELL_MANN[4], atol=0)
    assert_allclose(cd_hamiltonian(0.0), np.zeros((3, 3)))
    h = cd_hamiltonian(0.7)
    check_hermitian(h)
    assert abs(np.trace(h)) == 0


def test_gell_mann_coefficients_of_full_drive():
    p, s, cd = 0.3, 0.8, -0.25
    h = ideal_three_level_hamiltonian(p, s) + cd_hamiltonian(cd)
    coeffs = gell_mann_coefficients(h)
    expected = np.zeros(8)
    expected[0] = p / 2
    expected[5] = s / 2
    expected[4] = -2 * cd / 2
    assert_allclose(coeffs, expected, atol=1e-15)


def test_gell_mann_coefficients_reject_non_hermitian():
    h = np.zeros((3, 3), dtype=complex)
    h[0, 1] = 1.0
    with pytest.raises(ValueError):
        gell_mann_coefficients(h)


# --- dark and bright states ---

def test_dark_state_at_equal_drives():
    eig = dark_bright_states(1.0, 1.0)
    assert eig.theta == pytest.approx(math.pi / 4)
    assert_allclose(eig.dark, [HALF_SQRT2, 0, -HALF_SQRT2], atol=1e-15)


def test_dark_state_with_only_stokes_is_ground():
    eig = dark_bright_states(0.0, 1.0)
    assert eig.theta == 0.0
    assert_allclose(eig.dark, [1, 0, 0], atol=0)


def test_dark_bright_eigen_residuals(rng):
    for _ in range(1000):
        p, s = rng.uniform(0, 1, size=2)
        phi = rng.uniform(-math.pi, math.pi)
        h = ideal_three_level_hamiltonian(p, s, phi)
        eig = dark_bright_states(p, s, phi)
        assert np.linalg.norm(h @ eig.dark) <= 1e-12
        assert np.linalg.norm(h @ eig.bright_plus - eig.bright_energy * eig.bright_plus) <= 1e-12
        assert np.linalg.norm(h @ eig.bright_minus + eig.bright_energy * eig.bright_minus) <= 1e-12
        basis = np.stack([eig.dark, eig.bright_plus, eig.bright_minus], axis=1)
        assert_allclose(basis.conj().T @ basis, np.eye(3), atol=1e-12)


def test_dark_state_undefined_without_drive():
    with pytest.raises(ValueError):
        dark_bright_states(0.0, 0.0)


# --- qudit frames ---

def test_lab_frame_without_drive_is_diagonal():
    spec = TransmonSpec(level_count=4)
    schedule = _schedule(0.0, 0.0, spec.transition_freq(1), spec.transition_freq(2))
    h = lab_frame_hamiltonian(spec, schedule, 3.0)
    assert_allclose(h, np.diag(spec.level_freqs), atol=0)


def test_lab_frame_ladder_ratio():
    spec = TransmonSpec(level_count=4, normalize_drive=False)
    schedule = _schedule(0.2, 0.0, spec.transition_freq(1), spec.transition_freq(2))
    h = lab_frame_hamiltonian(spec, schedule, 0.0)
    assert h[1, 2] / h[0, 1] == pytest.approx(math.sqrt(2))
    assert h[2, 3] / h[0, 1] == pytest.approx(math.sqrt(3))
    check_hermitian(h)


def test_lab_frame_vanishes_at_carrier_zero_crossing():
    spec = TransmonSpec(level_count=3)
    carrier = spec.transition_freq(1)
    schedule = _schedule(0.2, 0.0, carrier, spec.transition_freq(2))
    h = lab_frame_hamiltonian(spec, schedule, math.pi / (2 * carrier))
    assert abs(h[0, 1]) < 1e-12
    assert abs(h[1, 2]) < 1e-12


def test_frames_reject_times_outside_schedule():
    spec = TransmonSpec(level_count=3)
    schedule = _schedule(0.1, 0.1, spec.transition_freq(1), spec.transition_freq(2), total_time=5.0)
    with pytest.raises(ValueError):
        lab_frame_hamiltonian(spec, schedule, 5.5)
    with pytest.raises(ValueError):
        rotating_frame_hamiltonian(spec, schedule, np.array([-1.0, 1.0]))


def test_rotating_frame_resonant_entry():
    spec = TransmonSpec(level_count=4)
    schedule = _schedule(0.3, 0.0, spec.transition_freq(1), spec.transition_freq(2))
    h = rotating_frame_hamiltonian(spec, schedule, np.array([0.0, 1.7, 6.3]))
    assert_allclose(h[:, 0, 1], 0.15, atol=1e-15)
    assert_allclose(np.diagonal(h, axis1=1, axis2=2), 0.0, atol=0)
    for hk in h:
        check_hermitian(hk)


def test_rotating_frame_normalizes_stokes_drive():
    spec = TransmonSpec(level_count=3, normalize_drive=True)
    schedule = _schedule(0.0, 0.4, spec.transition_freq(1), spec.transition_freq(2))
    h = rotating_frame_hamiltonian(spec, schedule, 2.0)
    # √2 matrix element cancels the 1/√2 drive scaling on the 1↔2 transition
    assert abs(h[1, 2]) == pytest.approx(0.2)


def test_rotating_frame_harmonic_ladder_is_static():
    omega = TWO_PI * 5.0
    spec = TransmonSpec(level_count=4, level_freqs=ladder_frequencies(4, omega, 0.0), normalize_drive=False)
    schedule = _schedule(0.3, 0.1, omega, omega, p_phase=0.4, s_phase=-1.1)
    h = rotating_frame_hamiltonian(spec, schedule, np.array([0.0, 2.5, 9.0]))
    assert_allclose(h[0], h[1], atol=1e-12)
    assert_allclose(h[0], h[2], atol=1e-12)
    combined = 0.5 * (0.3 * np.exp(0.4j) + 0.1 * np.exp(-1.1j))
    assert_allclose(h[0, 2, 3], math.sqrt(3) * combined, atol=1e-12)


def test_transmon_spec_defaults_to_ladder():
    spec = TransmonSpec(level_count=4)
    assert spec.level_freqs == ladder_frequencies(4)
    assert spec.anharmonicity == pytest.approx(-TWO_PI * 0.22)


def test_transmon_spec_rejects_bad_levels():
    with pytest.raises(ValueError):
        TransmonSpec(level_count=3, level_freqs=[0.0, 2.0, 1.0])
    with pytest.raises(ValueError):
        TransmonSpec(level_count=3, t1_times=[100.0])
    with pytest.raises(ValueError):
        TransmonSpec(level_count=3, thermal_pop1=0.5)


# --- open-system pieces ---

def test_no_collapse_channels_without_times():
    assert collapse_operators(TransmonSpec(level_count=3)) == []


def test_collapse_operator_rates():
    spec = TransmonSpec(level_count=3, t1_times=[100.0, 50.0], tphi_times=[200.0, 200.0, 200.0])
    channels = collapse_operators(spec)
    assert len(channels) == 5
    decay, rate = channels[1]
    assert decay[1, 2] == pytest.approx(math.sqrt(2))
    assert rate == pytest.approx(1 / math.sqrt(50.0))
    dephase, rate = channels[2]
    assert_allclose(dephase, basis_projector(3, 0))
    assert rate == pytest.approx(1 / math.sqrt(400.0))


def test_thermal_initial_state():
    rho = initial_density_matrix(TransmonSpec(level_count=4), thermal_pop1=0.05)
    assert_allclose(np.diag(rho).real, [0.95, 0.05, 0, 0])
    assert np.trace(rho).real == pytest.approx(1.0)
