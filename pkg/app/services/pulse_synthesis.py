import logging
import math
from typing import Optional, Tuple

import numpy as np

from app.models.pulse import (
    ControlParams,
    DressedPulses,
    DriveTone,
    EnvelopeConvention,
    EnvelopePair,
    GaussianStirapParams,
    PulseOrdering,
    PulseSchedule,
    ProtocolVariant,
    ToneLabel,
)
from app.models.transmon import TransmonSpec

logger = logging.getLogger(__name__)

DEGENERATE_DRIVE = 1e-300      # Ω_p² + Ω_s² below this counts as no drive
FD_STEP = 1e-3                 # ns, centered differences for envelopes without derivatives
ZETA_REGULATOR = 1e-3          # ε0 in ε(t) = ε0·Ω_ref·cos²θ(t)


def _gaussian(omega0: float, center: float, sigma: float):
    def f(t):
        t = np.asarray(t, dtype=float)
        return omega0 * np.exp(-((t - center) / sigma) ** 2)

    def f_dot(t):
        t = np.asarray(t, dtype=float)
        return -2.0 * (t - center) / sigma**2 * f(t)

    def f_ddot(t):
        t = np.asarray(t, dtype=float)
        return (4.0 * (t - center) ** 2 / sigma**4 - 2.0 / sigma**2) * f(t)

    return f, f_dot, f_ddot


def gaussian_envelopes(params: GaussianStirapParams) -> EnvelopePair:
    '''
    Gaussian pump/Stokes pair centred on T/2.
    PEAK_OFFSET puts the peaks at T/2 ∓ δτ with envelope exp(−((t − c)/σ)²).
    SEPARATION_FWHM puts them at T/2 ∓ δτ/2 with full width at half maximum 2σ.
    S_FIRST puts the Stokes peak first; P_FIRST keeps the pump first.
    '''
    half = params.total_time / 2.0
    if params.convention == EnvelopeConvention.SEPARATION_FWHM:
        offset, width = params.delta_tau / 2.0, params.sigma / math.sqrt(math.log(2.0))
    else:
        offset, width = params.delta_tau, params.sigma
    early, late = half - offset, half + offset
    if params.ordering == PulseOrdering.S_FIRST:
        p_center, s_center = late, early
    else:
        p_center, s_center = early, late
    p, p_dot, p_ddot = _gaussian(params.omega0, p_center, width)
    s, s_dot, s_ddot = _gaussian(params.omega0, s_center, width)
    return EnvelopePair(
        p_env=p, s_env=s,
        total_time=params.total_time, sample_step=params.sample_step, peak=params.omega0,
        p_dot=p_dot, s_dot=s_dot, p_ddot=p_ddot, s_ddot=s_ddot,
    )


def _centered(f, t, h: float = FD_STEP):
    return (f(t + h) - f(t - h)) / (2.0 * h)


def _centered2(f, t, h: float = FD_STEP):
    return (f(t + h) - 2.0 * f(t) + f(t - h)) / h**2


def _first_derivatives(pair: EnvelopePair, t):
    if pair.p_dot is not None and pair.s_dot is not None:
        return pair.p_dot(t), pair.s_dot(t)
    return _centered(pair.p_env, t), _centered(pair.s_env, t)


def _second_derivatives(pair: EnvelopePair, t):
    if pair.p_ddot is not None and pair.s_ddot is not None:
        return pair.p_ddot(t), pair.s_ddot(t)
    return _centered2(pair.p_env, t), _centered2(pair.s_env, t)


def mixing_angle(pair: EnvelopePair, t):
    '''θ(t) = arctan(Ω_p/Ω_s) ∈ [0, π/2] for nonnegative envelopes.'''
    p = np.asarray(pair.p_env(t), dtype=float)
    s = np.asarray(pair.s_env(t), dtype=float)
    if np.any((np.abs(p) < DEGENERATE_DRIVE) & (np.abs(s) < DEGENERATE_DRIVE)):
        raise ValueError("mixing angle is undefined where both envelopes vanish")
    theta = np.arctan2(p, s)
    return float(theta) if np.ndim(theta) == 0 else theta


def _cd_parts(pair: EnvelopePair, t):
    t = np.asarray(t, dtype=float)
    p, s = np.asarray(pair.p_env(t), dtype=float), np.asarray(pair.s_env(t), dtype=float)
    p_dot, s_dot = _first_derivatives(pair, t)
    norm2 = p * p + s * s
    live = norm2 >= DEGENERATE_DRIVE
    safe = np.where(live, norm2, 1.0)
    cd = np.where(live, (p_dot * s - p * s_dot) / safe, 0.0)
    return p, s, p_dot, s_dot, norm2, live, safe, cd


def cd_amplitude(pair: EnvelopePair, t):
    '''Counter-diabatic amplitude Ω_cd = (Ω̇_pΩ_s − Ω_pΩ̇_s)/(Ω_p² + Ω_s²) = θ̇; zero for vanishing drive.'''
    cd = _cd_parts(pair, t)[-1]
    return float(cd) if np.ndim(cd) == 0 else cd


def cd_amplitude_rate(pair: EnvelopePair, t):
    '''Ω̇_cd from the envelope second derivatives.'''
    p, s, p_dot, s_dot, norm2, live, safe, _ = _cd_parts(pair, t)
    p_ddot, s_ddot = _second_derivatives(pair, np.asarray(t, dtype=float))
    numerator = (p_ddot * s - p * s_ddot) * norm2 - (p_dot * s - p * s_dot) * (2 * p * p_dot + 2 * s * s_dot)
    rate = np.where(live, numerator / safe**2, 0.0)
    return float(rate) if np.ndim(rate) == 0 else rate


def _zeta_terms(pair: EnvelopePair, t, regulator: float):
    '''N = 2Ω_cd and D = Ω_s + ε0·Ω_ref·cos²θ, so that ζ = −arctan(N/D).'''
    p, s, p_dot, s_dot, norm2, live, safe, cd = _cd_parts(pair, t)
    cos2 = np.where(live, s * s / safe, 1.0)
    numer = 2.0 * cd
    denom = s + regulator * pair.peak * cos2
    return p, s, s_dot, norm2, live, safe, cd, numer, denom


def sta_dressed_pulses(pair: EnvelopePair, regulator: float = ZETA_REGULATOR) -> DressedPulses:
    '''
    Fold the counter-diabatic term into the two physical pulses.
    A rotation exp(iζλ1) cancels the λ5 component when tan ζ = −2Ω_cd/Ω_s, giving
    Ω̃_p = Ω_p − 2ζ̇ and Ω̃_s = √(Ω_s² + 4Ω_cd²). The small ε(t) term keeps ζ(0) ≈ 0
    where the Stokes tail decays faster than Ω_cd.
    '''
    def zeta(t):
        *_, numer, denom = _zeta_terms(pair, t, regulator)
        value = -np.arctan2(numer, denom)
        return float(value) if np.ndim(value) == 0 else value

    if pair.has_derivatives:
        def zeta_dot(t):
            t = np.asarray(t, dtype=float)
            p, s, s_dot, norm2, live, safe, cd, numer, denom = _zeta_terms(pair, t, regulator)
            sin2 = np.where(live, 2.0 * p * s / safe, 0.0)
            numer_dot = 2.0 * cd_amplitude_rate(pair, t)
            denom_dot = s_dot - regulator * pair.peak * sin2 * cd
            return -(numer_dot * denom - numer * denom_dot) / (denom**2 + numer**2)
    else:
        def zeta_dot(t):
            return _centered(zeta, np.asarray(t, dtype=float))

    def p_tilde(t):
        value = np.asarray(pair.p_env(t), dtype=float) - 2.0 * zeta_dot(t)
        return float(value) if np.ndim(value) == 0 else value

    def s_tilde(t):
        s = np.asarray(pair.s_env(t), dtype=float)
        value = np.sqrt(s * s + 4.0 * np.asarray(cd_amplitude(pair, t)) ** 2)
        return float(value) if np.ndim(value) == 0 else value

    def cd(t):
        return cd_amplitude(pair, t)

    return DressedPulses(p_tilde=p_tilde, s_tilde=s_tilde, zeta=zeta, cd=cd, source=pair)


def edge_window(t, total_time: float, ramp: float = 0.5):
    '''Flat-top window with raised-cosine ramps of length `ramp` at both ends; zero outside [0, T].'''
    t = np.asarray(t, dtype=float)
    if ramp <= 0:
        window = ((t >= 0) & (t <= total_time)).astype(float)
    else:
        rise = 0.5 * (1.0 - np.cos(np.pi * np.clip(t / ramp, 0.0, 1.0)))
        fall = 0.5 * (1.0 - np.cos(np.pi * np.clip((total_time - t) / ramp, 0.0, 1.0)))
        window = np.where((t < 0) | (t > total_time), 0.0, np.minimum(rise, fall))
    return float(window) if np.ndim(window) == 0 else window


def _windowed(envelope, factor: float, total_time: float, ramp: float):
    def f(t):
        value = factor * np.asarray(envelope(t), dtype=float) * edge_window(t, total_time, ramp)
        return float(value) if np.ndim(value) == 0 else value
    return f


def _schedule(
    p_env, s_env, c: ControlParams, spec: TransmonSpec, total_time: float, sample_step: float,
    ramp: float, variant: Optional[ProtocolVariant],
) -> PulseSchedule:
    if c.alpha_p <= 0 or c.alpha_s <= 0:
        raise ValueError("amplitude coefficients must be positive")
    p_carrier = spec.transition_freq(1) + c.beta_p
    s_carrier = spec.transition_freq(2) + c.beta_s
    tones = (
        DriveTone(label=ToneLabel.P, envelope=_windowed(p_env, c.alpha_p, total_time, ramp),
                  carrier=p_carrier, phase=0.0, detuning=c.beta_p),
        DriveTone(label=ToneLabel.S, envelope=_windowed(s_env, c.alpha_s, total_time, ramp),
                  carrier=s_carrier, phase=0.0, detuning=c.beta_s),
    )
    return PulseSchedule(total_time=total_time, tones=tones, sample_step=sample_step, variant=variant)


def apply_control_params(
    d: DressedPulses, c: ControlParams, spec: TransmonSpec, ramp: float = 0.5,
    variant: Optional[ProtocolVariant] = ProtocolVariant.STIRSAP_OPT,
) -> PulseSchedule:
    '''Scale the dressed pulses by α_k, detune the carriers by β_k and apply the edge window.'''
    return _schedule(d.p_tilde, d.s_tilde, c, spec, d.total_time, d.sample_step, ramp, variant)


def make_protocol_schedule(
    variant: ProtocolVariant,
    params: GaussianStirapParams,
    c: Optional[ControlParams],
    spec: TransmonSpec,
) -> PulseSchedule:
    variant = ProtocolVariant(variant)
    pair = gaussian_envelopes(params)
    if variant == ProtocolVariant.STIRAP:
        schedule = _schedule(pair.p_env, pair.s_env, ControlParams.identity(), spec,
                             params.total_time, params.sample_step, params.edge_ramp, variant)
    elif variant == ProtocolVariant.STIRSAP:
        schedule = apply_control_params(sta_dressed_pulses(pair), ControlParams.identity(), spec,
                                        params.edge_ramp, variant)
    else:
        if c is None:
            raise ValueError("stirsap_opt needs control parameters")
        schedule = apply_control_params(sta_dressed_pulses(pair), c, spec, params.edge_ramp, variant)
    logger.debug(f"Built {variant.value} schedule, T = {params.total_time} ns")
    return schedule


def sample_envelopes(pair: EnvelopePair) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    t = pair.times()
    return t, np.asarray(pair.p_env(t), dtype=float), np.asarray(pair.s_env(t), dtype=float)


def sample_dressed(d: DressedPulses) -> Tuple[np.ndarray, ...]:
    '''(t, Ω̃_p, Ω̃_s, Ω_cd, ζ) on the uniform grid of the source pair.'''
    t = d.source.times()
    return (
        t,
        np.asarray(d.p_tilde(t), dtype=float),
        np.asarray(d.s_tilde(t), dtype=float),
        np.asarray(d.cd(t), dtype=float),
        np.asarray(d.zeta(t), dtype=float),
    )


def sample_schedule(schedule: PulseSchedule) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    t = schedule.times()
    return (
        t,
        np.asarray(schedule.tone(ToneLabel.P).envelope(t), dtype=float),
        np.asarray(schedule.tone(ToneLabel.S).envelope(t), dtype=float),
    )
