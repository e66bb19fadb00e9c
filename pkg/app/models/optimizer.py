import math
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class Termination(str, Enum):
    TARGET_REACHED = "target_reached"
    BUDGET_EXHAUSTED = "budget_exhausted"
    STAGNATION = "stagnation"


class CmaesConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    dimension: int = Field(..., ge=1)
    population: Optional[int] = Field(None, description="λ, default 4 + ⌊3·ln n⌋")
    parents: Optional[int] = Field(None, description="μ, default ⌊λ/2⌋")
    initial_mean: List[float]
    initial_step: Optional[float] = Field(None, gt=0, description="σ₀, default 0.3 of the smallest box width")
    bounds: List[Tuple[float, float]]
    max_evaluations: int = Field(2000, ge=1)
    target_cost: Optional[float] = None
    seed: int = Field(1, ge=0, lt=2**64)
    stagnation_generations: int = Field(30, ge=1)
    stagnation_tolerance: float = Field(1e-12, ge=0)
    workers: int = Field(1, ge=0, description="Parallel cost evaluations per generation (0 = all cores)")

    @model_validator(mode="before")
    @classmethod
    def _fill_defaults(cls, data):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        n = int(data["dimension"])
        if data.get("population") is None:
            data["population"] = 4 + int(math.floor(3 * math.log(n)))
        if data.get("parents") is None:
            data["parents"] = int(data["population"]) // 2
        if data.get("initial_step") is None and data.get("bounds"):
            data["initial_step"] = 0.3 * min(hi - lo for lo, hi in data["bounds"])
        return data

    @model_validator(mode="after")
    def _check(self) -> "CmaesConfig":
        if self.population < 4:
            raise ValueError("population must be at least 4")
        if not 1 <= self.parents <= self.population:
            raise ValueError("parents must lie in [1, population]")
        if len(self.initial_mean) != self.dimension or len(self.bounds) != self.dimension:
            raise ValueError("initial_mean and bounds must match the dimension")
        for (lo, hi), x in zip(self.bounds, self.initial_mean):
            if not lo < hi:
                raise ValueError(f"empty bound [{lo}, {hi}]")
            if not lo <= x <= hi:
                raise ValueError(f"initial mean coordinate {x} is outside [{lo}, {hi}]")
        return self

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.bounds], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.bounds], dtype=float)


class CmaesState(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    mean: np.ndarray
    covariance: np.ndarray
    sigma: float = Field(..., gt=0)
    path_sigma: np.ndarray
    path_c: np.ndarray
    generation: int = 0
    evaluations: int = 0
    best_x: Optional[np.ndarray] = None
    best_cost: float = math.inf


class GenerationRecord(BaseModel):
    generation: int
    evaluations: int
    best_cost: float
    median_cost: float
    sigma: float


class EvaluationRecord(BaseModel):
    generation: int
    index: int
    x: List[float]
    cost: float


class OptimizationResult(BaseModel):
    best_params: List[float]
    best_cost: float
    evaluations: int
    history: List[GenerationRecord]
    candidates: List[EvaluationRecord] = Field(default_factory=list)
    termination: Termination
    seed: int
