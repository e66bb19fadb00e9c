from typing import List

from pydantic import BaseModel, Field, model_validator


class FidelityReport(BaseModel):
    fidelity: float = Field(..., ge=0.0, le=1.0, description="Uhlmann fidelity against the target state")
    cost: float = Field(..., ge=0.0, le=1.0, description="1 − fidelity")
    final_populations: List[float] = Field(..., description="Level occupations at t = T")
    leakage: float = Field(..., ge=0.0, le=1.0, description="Population outside levels {0, 1, 2} at t = T")
    intermediate_peak: float = Field(..., description="Maximum population of level 1 over the recorded grid")
    target_level: int = Field(2, ge=0)

    @model_validator(mode="after")
    def _cost_matches(self) -> "FidelityReport":
        if abs(self.cost - (1.0 - self.fidelity)) > 1e-12:
            raise ValueError("cost must equal 1 − fidelity")
        return self
