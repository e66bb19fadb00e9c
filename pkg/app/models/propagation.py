from enum import Enum
from typing import Callable, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

# A time-indexed Hamiltonian: maps an array of N times (ns) to an (N, d, d) complex array.
TimeDependentHamiltonian = Callable[[np.ndarray], np.ndarray]

# QuantumState is a normalized complex vector, DensityMatrix a unit-trace PSD matrix.
# Both travel as plain numpy arrays; validate_state/validate_density check the invariants.
QuantumState = np.ndarray
DensityMatrix = np.ndarray

DEFAULT_DT = {"lab": 0.002, "rotating": 0.02}


class Frame(str, Enum):
    LAB = "lab"
    ROTATING = "rotating"


class Method(str, Enum):
    PIECEWISE_EXPONENTIAL = "piecewise_exponential"  # exp(−iH(t_mid)dt) per step
    MAGNUS4 = "magnus4"                              # two-point Gauss–Legendre Magnus, 4th order
    RK4 = "rk4"


class PropagationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    frame: Frame = Field(Frame.ROTATING, description="Frame the Hamiltonian is written in")
    dt: Optional[float] = Field(None, gt=0, description="Step (ns); defaults to 0.002 LAB / 0.02 ROTATING")
    method: Method = Field(Method.MAGNUS4, description="Integrator; Lindblad runs use its exponentials for the unitary half steps (MAGNUS4 for RK4)")
    record_stride: int = Field(1, ge=1, description="Record every n-th step (first and last always kept)")
    keep_snapshots: bool = Field(False, description="Store full states at recorded times")

    @model_validator(mode="before")
    @classmethod
    def _default_dt(cls, data):
        if isinstance(data, dict) and data.get("dt") is None:
            data = dict(data)
            frame = data.get("frame", Frame.ROTATING)
            data["dt"] = DEFAULT_DT[Frame(frame).value]
        return data

    def steps_for(self, total_time: float) -> int:
        '''Number of equal steps covering [0, T]; the effective step never exceeds dt.'''
        if self.dt > total_time:
            raise ValueError(f"dt = {self.dt} ns exceeds the total time {total_time} ns")
        return max(1, int(np.ceil(total_time / self.dt - 1e-9)))


class TrajectoryRecord(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    times: np.ndarray = Field(..., description="Recorded times (ns)")
    populations: np.ndarray = Field(..., description="(n_times, dim) level occupations")
    snapshots: Optional[np.ndarray] = Field(None, description="States or density matrices at recorded times")
    final_state: np.ndarray = Field(..., description="State vector or density matrix at t = T")
    norm_drift: float = Field(0.0, description="max |‖ψ‖² − 1| or |Tr ρ − 1| over recorded times")
    warnings: List[str] = Field(default_factory=list)

    @property
    def is_density(self) -> bool:
        return self.final_state.ndim == 2

    @property
    def dim(self) -> int:
        return self.final_state.shape[0]

    def final_populations(self) -> np.ndarray:
        return self.populations[-1]
