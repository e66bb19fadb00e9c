from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# Vectorized real envelope: accepts a float or an array of times (ns), returns rad/ns.
Envelope = Callable[[Any], Any]


class PulseOrdering(str, Enum):
    S_FIRST = "s_first"  # counterintuitive ordering, dark state starts on |0⟩
    P_FIRST = "p_first"  # Gaussian pair exactly as printed, dark state starts on |2⟩


class EnvelopeConvention(str, Enum):
    PEAK_OFFSET = "peak_offset"          # exp(-((t - c)/σ)²), peaks at T/2 ∓ δτ
    SEPARATION_FWHM = "separation_fwhm"  # peaks δτ apart, full width at half maximum 2σ


class ProtocolVariant(str, Enum):
    STIRAP = "stirap"
    STIRSAP = "stirsap"
    STIRSAP_OPT = "stirsap_opt"


class ToneLabel(str, Enum):
    P = "p"
    S = "s"


class GaussianStirapParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    omega0: float = Field(..., gt=0, description="Peak Gaussian amplitude Ω_0 (rad/ns)")
    total_time: float = Field(..., gt=0, description="Total evolution time T (ns)")
    delta_tau: Optional[float] = Field(None, description="Pulse separation δτ (ns), default T/11")
    sigma: Optional[float] = Field(None, description="Gaussian width σ (ns), default T/12 so that 2σ = T/6")
    ordering: PulseOrdering = Field(PulseOrdering.S_FIRST, description="Which pulse comes first")
    convention: EnvelopeConvention = Field(
        EnvelopeConvention.PEAK_OFFSET, description="How δτ and σ map onto the Gaussian pair"
    )
    sample_step: float = Field(0.01, gt=0, description="Sampling step for exports and serialized schedules (ns)")
    edge_ramp: float = Field(0.5, ge=0, description="Raised-cosine ramp length of the edge window (ns)")

    @model_validator(mode="before")
    @classmethod
    def _fill_defaults(cls, data):
        if isinstance(data, dict) and "total_time" in data:
            data = dict(data)
            total_time = float(data["total_time"])
            if data.get("delta_tau") is None:
                data["delta_tau"] = total_time / 11.0
            if data.get("sigma") is None:
                data["sigma"] = total_time / 12.0
        return data

    @model_validator(mode="after")
    def _check_geometry(self) -> "GaussianStirapParams":
        if not 0 < self.delta_tau < self.total_time / 2:
            raise ValueError("delta_tau must lie in (0, total_time/2)")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if 2 * self.edge_ramp > self.total_time:
            raise ValueError("edge_ramp is longer than half the pulse")
        return self

    def with_total_time(self, total_time: float) -> "GaussianStirapParams":
        '''Same family at a new duration; δτ and σ rescale with T.'''
        data = self.model_dump(exclude={"delta_tau", "sigma"})
        data["total_time"] = total_time
        return GaussianStirapParams(**data)


class EnvelopePair(BaseModel):
    '''P and S envelopes as closed-form evaluators, with optional analytic derivatives.'''
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    p_env: Envelope
    s_env: Envelope
    total_time: float = Field(..., gt=0)
    sample_step: float = Field(0.01, gt=0)
    peak: float = Field(..., gt=0, description="Reference amplitude used for relative thresholds (rad/ns)")
    p_dot: Optional[Envelope] = None
    s_dot: Optional[Envelope] = None
    p_ddot: Optional[Envelope] = None
    s_ddot: Optional[Envelope] = None

    @property
    def has_derivatives(self) -> bool:
        return None not in (self.p_dot, self.s_dot, self.p_ddot, self.s_ddot)

    def times(self) -> np.ndarray:
        count = int(np.floor(self.total_time / self.sample_step + 1e-9)) + 1
        return np.arange(count) * self.sample_step

    def scaled(self, factor: float) -> "EnvelopePair":
        '''Both envelopes (and derivatives) multiplied by a common constant.'''
        def scale(f):
            return None if f is None else (lambda t, f=f: factor * f(t))
        return EnvelopePair(
            p_env=scale(self.p_env), s_env=scale(self.s_env),
            total_time=self.total_time, sample_step=self.sample_step, peak=abs(factor) * self.peak,
            p_dot=scale(self.p_dot), s_dot=scale(self.s_dot),
            p_ddot=scale(self.p_ddot), s_ddot=scale(self.s_ddot),
        )


class DressedPulses(BaseModel):
    '''Output of the shortcut-to-adiabaticity pulse transform.'''
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    p_tilde: Envelope
    s_tilde: Envelope
    zeta: Envelope
    cd: Envelope
    source: EnvelopePair

    @property
    def total_time(self) -> float:
        return self.source.total_time

    @property
    def sample_step(self) -> float:
        return self.source.sample_step


class ControlParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    alpha_p: float = Field(1.0, gt=0, description="P amplitude coefficient α_p")
    alpha_s: float = Field(1.0, gt=0, description="S amplitude coefficient α_s")
    beta_p: float = Field(0.0, description="P detuning Δ_p (rad/ns)")
    beta_s: float = Field(0.0, description="S detuning Δ_s (rad/ns)")

    @classmethod
    def identity(cls) -> "ControlParams":
        return cls()

    @classmethod
    def from_vector(cls, x) -> "ControlParams":
        alpha_p, alpha_s, beta_p, beta_s = (float(v) for v in x)
        return cls(alpha_p=alpha_p, alpha_s=alpha_s, beta_p=beta_p, beta_s=beta_s)

    def as_vector(self) -> np.ndarray:
        return np.array([self.alpha_p, self.alpha_s, self.beta_p, self.beta_s])


class DriveTone(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    label: ToneLabel
    envelope: Envelope = Field(..., exclude=True, description="Windowed envelope (rad/ns); negative values flip the phase by π")
    carrier: float = Field(..., gt=0, description="Carrier angular frequency ω_k (rad/ns)")
    phase: float = Field(0.0, description="Carrier phase φ_k (rad)")
    detuning: float = Field(0.0, description="Δ_k relative to the labeled transition (rad/ns)")


class PulseSchedule(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    total_time: float = Field(..., gt=0)
    tones: Tuple[DriveTone, DriveTone]
    sample_step: float = Field(..., gt=0)
    variant: Optional[ProtocolVariant] = None

    @field_validator("tones")
    @classmethod
    def _one_of_each(cls, tones):
        labels = sorted(t.label.value for t in tones)
        if labels != ["p", "s"]:
            raise ValueError("a schedule needs exactly one P tone and one S tone")
        return tones

    def tone(self, label: ToneLabel) -> DriveTone:
        return next(t for t in self.tones if t.label == label)

    def times(self) -> np.ndarray:
        count = int(np.floor(self.total_time / self.sample_step + 1e-9)) + 1
        return np.arange(count) * self.sample_step

    def to_record(self) -> Dict[str, Any]:
        '''JSON-ready form holding the envelopes sampled on the schedule grid.'''
        t = self.times()
        return {
            "total_time": self.total_time,
            "sample_step": self.sample_step,
            "variant": None if self.variant is None else self.variant.value,
            "tones": [
                {
                    "label": tone.label.value,
                    "carrier": tone.carrier,
                    "phase": tone.phase,
                    "detuning": tone.detuning,
                    "samples": [float(v) for v in np.asarray(tone.envelope(t), dtype=float)],
                }
                for tone in self.tones
            ],
        }

    @classmethod
    def from_record(cls, record: Dict[str, Any]) -> "PulseSchedule":
        '''Rebuild a schedule whose envelopes interpolate the stored samples.'''
        total_time = float(record["total_time"])
        sample_step = float(record["sample_step"])
        count = int(np.floor(total_time / sample_step + 1e-9)) + 1
        grid = np.arange(count) * sample_step
        tones: List[DriveTone] = []
        for item in record["tones"]:
            samples = np.asarray(item["samples"], dtype=float)
            if samples.shape != grid.shape:
                raise ValueError(f"tone {item['label']} has {samples.size} samples, expected {grid.size}")
            tones.append(DriveTone(
                label=ToneLabel(item["label"]),
                envelope=lambda t, s=samples: np.interp(t, grid, s),
                carrier=item["carrier"],
                phase=item.get("phase", 0.0),
                detuning=item.get("detuning", 0.0),
            ))
        variant = record.get("variant")
        return cls(
            total_time=total_time,
            sample_step=sample_step,
            tones=tuple(tones),
            variant=None if variant is None else ProtocolVariant(variant),
        )
