from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from ..core.config import Settings


class SolveConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    epsilon: float = Field(1e-10, gt=0, description="Tolerance on |E_Q[f'^-1] - 1|")
    max_iters: int = Field(200, ge=1, description="Bisection iteration cap")
    bracket_growth: float = Field(2.0, gt=1)
    max_bracket_expansions: int = Field(120, ge=1)
    gap_tolerance: float = Field(1e-8, gt=0, description="Relative duality-gap tolerance")
    gradient_tolerance: Optional[float] = Field(None, gt=0)
    drift_ceiling: float = Field(1e-3, gt=0)

    @property
    def dual_gradient_tolerance(self) -> float:
        return self.gradient_tolerance if self.gradient_tolerance is not None else self.epsilon

    @classmethod
    def from_settings(cls, settings: Settings, **overrides) -> "SolveConfig":
        values = {
            "epsilon": settings.epsilon,
            "max_iters": settings.max_iters,
            "bracket_growth": settings.bracket_growth,
            "max_bracket_expansions": settings.max_bracket_expansions,
            "gap_tolerance": settings.gap_tolerance,
            "gradient_tolerance": settings.gradient_tolerance,
            "drift_ceiling": settings.drift_ceiling,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


class SolveReport(BaseModel):
    beta: float
    residual: float
    iterations: int
    bracket: tuple[float, float]
    bracket_history: list[tuple[float, float]] = []
    expansions: int = 0
    feasible: bool = True
    failure_reason: Optional[str] = None


class DualReport(BaseModel):
    beta_hat: float
    dual_value: float
    primal_value: float
    gap: float
    grad_norm_at_opt: float
    iterations: int
    bracket: tuple[float, float]
    certified: bool


class LambdaStarEstimate(BaseModel):
    value: float
    at_lower_bound: bool = Field(
        False, description="Feasible already at the lower probe; lambda* <= value"
    )
    bracket: tuple[float, float]
    probes: int


class OdePath(BaseModel):
    lambdas: list[float]
    n_values: list[float]
    n_direct: list[Optional[float]]
    rel_err: list[Optional[float]]
    max_rel_err: float
    derivative_disagreement: float = 0.0
    monotone: str = Field("none", description="increasing, decreasing, constant or none")
    truncated_at: Optional[float] = None


class TiltedSolutionRead(BaseModel):
    lambda_: float = Field(serialization_alias="lambda")
    beta: float
    points: list[list[float]]
    rn_values: list[float]
    tilted_weights: list[float]
