import math
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

TWO_PI = 2 * math.pi

# Typical transmon values; the device parameters behind the reference results are not published.
DEFAULT_OMEGA1 = TWO_PI * 5.0            # rad/ns
DEFAULT_ANHARMONICITY = -TWO_PI * 0.22   # rad/ns


def ladder_frequencies(
    level_count: int = 4,
    omega1: float = DEFAULT_OMEGA1,
    anharmonicity: float = DEFAULT_ANHARMONICITY,
) -> List[float]:
    '''
    Weakly anharmonic ladder ω_n = n·ω_1 + n(n−1)/2·α with ω_0 = 0.
    For four levels this gives ω_2 = 2ω_1 + α and ω_3 = 3ω_1 + 3α.
    '''
    return [n * omega1 + 0.5 * n * (n - 1) * anharmonicity for n in range(level_count)]


class TransmonSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    level_count: int = Field(4, ge=2, description="Number of qudit levels kept in the model")
    level_freqs: Optional[List[float]] = Field(
        None, description="Angular level frequencies ω_n in rad/ns, ω_0 = 0 (defaults to the transmon ladder)"
    )
    t1_times: Optional[List[float]] = Field(
        None, description="Relaxation time T1 (ns) for each decay j→j−1, j = 1..level_count−1"
    )
    tphi_times: Optional[List[float]] = Field(
        None, description="Pure-dephasing time (ns) for each level 0..level_count−1"
    )
    thermal_pop1: float = Field(0.0, ge=0.0, le=0.1, description="Initial thermal occupation of level 1")
    normalize_drive: bool = Field(
        True,
        description="Scale each tone by 1/√j of its target transition so the envelope equals that transition's Rabi rate",
    )

    @model_validator(mode="before")
    @classmethod
    def _fill_ladder(cls, data):
        if isinstance(data, dict) and data.get("level_freqs") is None:
            data = dict(data)
            data["level_freqs"] = ladder_frequencies(int(data.get("level_count", 4)))
        return data

    @model_validator(mode="after")
    def _check_levels(self) -> "TransmonSpec":
        freqs = self.level_freqs
        if len(freqs) != self.level_count:
            raise ValueError(f"level_freqs has {len(freqs)} entries, expected {self.level_count}")
        if freqs[0] != 0.0:
            raise ValueError("level_freqs[0] must be 0 (ω_0 = 0)")
        if any(b <= a for a, b in zip(freqs, freqs[1:])):
            raise ValueError("level_freqs must be strictly increasing")
        if self.t1_times is not None:
            if len(self.t1_times) != self.level_count - 1:
                raise ValueError(f"t1_times needs {self.level_count - 1} entries (one per decay j→j−1)")
            if any(t <= 0 for t in self.t1_times):
                raise ValueError("t1_times must be strictly positive")
        if self.tphi_times is not None:
            if len(self.tphi_times) != self.level_count:
                raise ValueError(f"tphi_times needs {self.level_count} entries (one per level)")
            if any(t <= 0 for t in self.tphi_times):
                raise ValueError("tphi_times must be strictly positive")
        return self

    @property
    def anharmonicity(self) -> float:
        if self.level_count < 3:
            return 0.0
        return self.level_freqs[2] - 2 * self.level_freqs[1]

    def transition_freq(self, j: int) -> float:
        '''Frequency of the ladder transition j−1 ↔ j.'''
        return self.level_freqs[j] - self.level_freqs[j - 1]

    @property
    def has_decoherence(self) -> bool:
        return bool(self.t1_times) or bool(self.tphi_times)


class EigenStructure(BaseModel):
    '''Dark and bright eigenvectors of the ideal three-level Hamiltonian.'''
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    theta: float = Field(..., description="Mixing angle θ (rad)")
    phi: float = Field(..., description="Relative phase φ (rad)")
    dark: np.ndarray
    bright_plus: np.ndarray
    bright_minus: np.ndarray
    bright_energy: float = Field(..., description="½√(Ω_p² + Ω_s²), eigenvalue of bright_plus")
