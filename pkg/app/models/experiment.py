import math
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.models.metrics import FidelityReport
from app.models.optimizer import CmaesConfig
from app.models.propagation import PropagationConfig
from app.models.pulse import ControlParams, GaussianStirapParams, ProtocolVariant
from app.models.transmon import TWO_PI, TransmonSpec

DEFAULT_ALPHA_BOUNDS = (0.5, 1.5)
DEFAULT_BETA_BOUNDS = (-TWO_PI * 0.05, TWO_PI * 0.05)
DEFAULT_ETA_VALUES = [float(v) for v in np.linspace(-0.2, 0.2, 21)]
DEFAULT_DELTA_VALUES = [float(v) for v in np.linspace(-TWO_PI * 0.02, TWO_PI * 0.02, 21)]


class ScanMode(str, Enum):
    AMPLITUDE = "amplitude"
    DETUNING = "detuning"


class OptimizerSection(BaseModel):
    '''User-facing optimizer knobs; the search is always over (α_p, α_s, β_p, β_s).'''
    model_config = ConfigDict(extra="forbid", frozen=True)

    max_evaluations: int = Field(2000, ge=1)
    population: Optional[int] = Field(None, ge=4)
    initial_step: Optional[float] = Field(None, gt=0)
    alpha_bounds: Tuple[float, float] = DEFAULT_ALPHA_BOUNDS
    beta_bounds: Tuple[float, float] = DEFAULT_BETA_BOUNDS
    initial_mean: List[float] = Field(default_factory=lambda: [1.0, 1.0, 0.0, 0.0])
    target_cost: Optional[float] = None
    stagnation_generations: int = Field(30, ge=1)
    keep_decoherence: bool = Field(False, description="Keep collapse channels inside the optimization loop")
    write_logs: bool = Field(True, description="Write optimizer_log.csv and optimizer_candidates.csv")

    def cmaes_config(self, seed: int, workers: int = 1) -> CmaesConfig:
        return CmaesConfig(
            dimension=4,
            population=self.population,
            initial_mean=list(self.initial_mean),
            initial_step=self.initial_step,
            bounds=[self.alpha_bounds, self.alpha_bounds, self.beta_bounds, self.beta_bounds],
            max_evaluations=self.max_evaluations,
            target_cost=self.target_cost,
            seed=seed,
            stagnation_generations=self.stagnation_generations,
            workers=workers,
        )


class ScanSection(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    eta_values: List[float] = Field(default_factory=lambda: list(DEFAULT_ETA_VALUES))
    delta_values: List[float] = Field(default_factory=lambda: list(DEFAULT_DELTA_VALUES))


class SweepSection(BaseModel):
    '''Either an explicit list of total times or a start/stop/step range (ns).'''
    model_config = ConfigDict(extra="forbid", frozen=True)

    times: Optional[List[float]] = None
    start: Optional[float] = Field(None, gt=0)
    stop: Optional[float] = Field(None, gt=0)
    step: Optional[float] = Field(None, gt=0)
    variants: List[ProtocolVariant] = Field(
        default_factory=lambda: [ProtocolVariant.STIRAP, ProtocolVariant.STIRSAP, ProtocolVariant.STIRSAP_OPT]
    )

    @model_validator(mode="after")
    def _one_form(self) -> "SweepSection":
        ranged = (self.start, self.stop, self.step)
        if self.times is None and None in ranged:
            raise ValueError("sweep needs either `times` or all of `start`, `stop`, `step`")
        if self.times is not None and any(v is not None for v in ranged):
            raise ValueError("sweep takes `times` or a range, not both")
        return self

    def resolved_times(self) -> List[float]:
        if self.times is not None:
            return list(self.times)
        count = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return [self.start + i * self.step for i in range(count)]


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    transmon: TransmonSpec = Field(default_factory=TransmonSpec)
    protocol: ProtocolVariant = ProtocolVariant.STIRSAP
    pulse: GaussianStirapParams
    control: Optional[ControlParams] = None
    propagation: PropagationConfig = Field(default_factory=PropagationConfig)
    decoherence_enabled: bool = False
    optimizer: Optional[OptimizerSection] = None
    scan: ScanSection = Field(default_factory=ScanSection)
    sweep: Optional[SweepSection] = None
    output_dir: str = "runs/default"
    seed: int = Field(1, ge=0, lt=2**64)
    threads: int = Field(1, ge=0, description="Worker processes for grids, sweeps and candidate batches (0 = all cores)")

    @model_validator(mode="after")
    def _opt_needs_source(self) -> "ExperimentConfig":
        if self.protocol == ProtocolVariant.STIRSAP_OPT and self.control is None and self.optimizer is None:
            raise ValueError("protocol stirsap_opt needs a `control` section or an `optimizer` section")
        return self

    def with_updates(self, **changes: Any) -> "ExperimentConfig":
        '''Copy with top-level fields replaced; the result is re-validated.'''
        data = self.model_dump()
        for key, value in changes.items():
            data[key] = value.model_dump() if isinstance(value, BaseModel) else value
        return ExperimentConfig.model_validate(data)


class TimeSweepSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    times: List[float] = Field(..., min_length=1)
    omega0: float = Field(..., gt=0)
    reference_period: Optional[float] = Field(None, description="T₀ = 2π/Ω_0 (ns)")

    @model_validator(mode="before")
    @classmethod
    def _derive_period(cls, data):
        if isinstance(data, dict) and data.get("reference_period") is None and "omega0" in data:
            data = dict(data)
            data["reference_period"] = TWO_PI / float(data["omega0"])
        return data

    @model_validator(mode="after")
    def _check(self) -> "TimeSweepSpec":
        if any(t <= 0 for t in self.times):
            raise ValueError("sweep times must be positive")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("sweep times must be strictly increasing")
        if abs(self.reference_period - TWO_PI / self.omega0) > 1e-12:
            raise ValueError("reference_period must equal 2π/omega0")
        return self


class RobustnessAxes(BaseModel):
    '''
    Error grids around a reference operating point.
    Amplitude errors η_k act as Ω_k = (1 − η_k)·Ω_ref,k; detuning errors as Δ_k = Δ_ref,k + δ_k.
    '''
    model_config = ConfigDict(extra="forbid", frozen=True)

    eta_values: List[float] = Field(..., min_length=1)
    delta_values: List[float] = Field(..., min_length=1)
    reference: ControlParams

    @field_validator("eta_values")
    @classmethod
    def _eta_below_one(cls, values):
        if any(v >= 1 for v in values):
            raise ValueError("amplitude errors must be < 1 so amplitudes stay positive")
        return values

    @property
    def reference_amplitudes(self) -> Tuple[float, float]:
        return self.reference.alpha_p, self.reference.alpha_s

    @property
    def reference_detunings(self) -> Tuple[float, float]:
        return self.reference.beta_p, self.reference.beta_s

    def values_for(self, mode: ScanMode) -> List[float]:
        return self.eta_values if mode == ScanMode.AMPLITUDE else self.delta_values

    def perturbed(self, mode: ScanMode, err_p: float, err_s: float) -> ControlParams:
        ref = self.reference
        if mode == ScanMode.AMPLITUDE:
            return ref.model_copy(update={"alpha_p": (1 - err_p) * ref.alpha_p, "alpha_s": (1 - err_s) * ref.alpha_s})
        return ref.model_copy(update={"beta_p": ref.beta_p + err_p, "beta_s": ref.beta_s + err_s})


class SweepRow(BaseModel):
    T_ns: float
    variant: ProtocolVariant
    fidelity: float
    leakage: float
    error: str = ""


class ScanResult(BaseModel):
    mode: ScanMode
    err_p: List[float]
    err_s: List[float]
    fidelity: List[List[float]] = Field(..., description="fidelity[i][j] at (err_p[i], err_s[j]); NaN on failure")

    def rows(self) -> List[Tuple[float, float, float]]:
        return [
            (p, s, self.fidelity[i][j])
            for i, p in enumerate(self.err_p)
            for j, s in enumerate(self.err_s)
        ]

    def antidiagonal(self) -> List[Tuple[float, float, float]]:
        '''Cells with err_s = −err_p (requires a grid symmetric about zero).'''
        out = []
        for i, p in enumerate(self.err_p):
            for j, s in enumerate(self.err_s):
                if abs(s + p) <= 1e-12 * max(1.0, abs(p)):
                    out.append((p, s, self.fidelity[i][j]))
        return out


class RunManifest(BaseModel):
    tool_version: str
    operation: str
    timestamp: str
    config: Dict[str, Any]
    seed: int
    report: Optional[FidelityReport] = None
    files: List[str] = Field(default_factory=list)
    duration_s: float = 0.0
    extra: Dict[str, Any] = Field(default_factory=dict)
