from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..engine.generators import GENERATOR_NAMES


class DiscreteMeasureSpec(BaseModel):
    type: Literal["discrete"]
    points: list[Union[float, list[float]]] = Field(min_length=1)
    weights: Optional[list[float]] = None

    @model_validator(mode="after")
    def check_lengths(self):
        if self.weights is not None and len(self.weights) != len(self.points):
            raise ValueError(f"{len(self.points)} points but {len(self.weights)} weights")
        return self


class GridMeasureSpec(BaseModel):
    type: Literal["grid"]
    density: Literal["gaussian", "laplace", "uniform"] = "gaussian"
    low: float
    high: float
    nodes: int = Field(ge=2)
    loc: float = 0.0
    scale: float = Field(1.0, gt=0)


class SampleMeasureSpec(BaseModel):
    type: Literal["sample"]
    distribution: Literal["gaussian", "laplace", "uniform"] = "gaussian"
    n: int = Field(ge=1)
    seed: int = 0
    loc: float = 0.0
    scale: float = Field(1.0, gt=0)


MeasureSpec = Annotated[
    Union[DiscreteMeasureSpec, GridMeasureSpec, SampleMeasureSpec],
    Field(discriminator="type"),
]


class DatasetRiskSpec(BaseModel):
    type: Literal["dataset"]
    pairs: list[tuple[Union[float, list[float]], float]] = Field(min_length=1)
    model: Literal["affine", "linear"] = "linear"
    loss: Literal["squared_error", "absolute_error", "zero_one"] = "squared_error"
    margin: float = 0.0


class RawRiskSpec(BaseModel):
    type: Literal["raw"]
    risk_values: list[float] = Field(min_length=1)


RiskSpec = Annotated[Union[DatasetRiskSpec, RawRiskSpec], Field(discriminator="type")]


class ExplicitLambdaGrid(BaseModel):
    type: Literal["explicit"] = "explicit"
    values: list[float] = Field(min_length=1)

    def resolve(self) -> list[float]:
        return list(self.values)


class SpacedLambdaGrid(BaseModel):
    type: Literal["log", "linear"]
    start: float
    stop: float
    num: int = Field(ge=1)

    def resolve(self) -> list[float]:
        if self.type == "log":
            return np.geomspace(self.start, self.stop, self.num).tolist()
        return np.linspace(self.start, self.stop, self.num).tolist()


LambdaGridSpec = Annotated[
    Union[ExplicitLambdaGrid, SpacedLambdaGrid], Field(discriminator="type")
]


class SolverOverrides(BaseModel):
    """Solver settings from the experiment file; unset fields fall back to the environment."""

    epsilon: Optional[float] = Field(None, gt=0)
    max_iters: Optional[int] = Field(None, ge=1)
    bracket_growth: Optional[float] = Field(None, gt=1)
    max_bracket_expansions: Optional[int] = Field(None, ge=1)
    gap_tolerance: Optional[float] = Field(None, gt=0)
    gradient_tolerance: Optional[float] = Field(None, gt=0)
    drift_ceiling: Optional[float] = Field(None, gt=0)


class OutputSpec(BaseModel):
    directory: Optional[str] = None
    rows: str = "results.csv"
    path: str = "path.csv"
    summary: str = "summary.json"
    solutions: Optional[str] = "solutions.json"


Mode = Literal["solve", "certify", "path", "lambda_star"]


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    generator: str
    measure: MeasureSpec
    risk: RiskSpec
    lambdas: LambdaGridSpec
    solver: SolverOverrides = SolverOverrides()
    mode: Mode = "solve"
    stepper: Literal["rk4", "heun"] = "rk4"
    probe_range: tuple[float, float] = (1e-6, 1e6)
    output: OutputSpec = OutputSpec()

    @field_validator("generator")
    @classmethod
    def known_generator(cls, value: str) -> str:
        if value not in GENERATOR_NAMES:
            raise ValueError(
                f"Unknown generator '{value}'. Expected one of: {', '.join(GENERATOR_NAMES)}"
            )
        return value

    @field_validator("lambdas")
    @classmethod
    def positive_grid(cls, value):
        grid = value.resolve()
        if not grid:
            raise ValueError("lambda grid is empty")
        if any(not (x > 0 and np.isfinite(x)) for x in grid):
            raise ValueError("lambda grid must be positive and finite")
        return value

    @field_validator("probe_range")
    @classmethod
    def ordered_probes(cls, value: tuple[float, float]) -> tuple[float, float]:
        if not 0 < value[0] < value[1]:
            raise ValueError("probe_range must satisfy 0 < lo < hi")
        return value

    @property
    def lambda_grid(self) -> list[float]:
        return self.lambdas.resolve()


class SweepRow(BaseModel):
    """One output row per regularization factor; failures keep feasible=False."""

    lambda_: float = Field(serialization_alias="lambda")
    beta: Optional[float] = None
    primal: Optional[float] = None
    dual: Optional[float] = None
    gap: Optional[float] = None
    iterations: Optional[int] = None
    feasible: bool = False
    delta_star: float
    closed_form: Optional[float] = None
    failure_reason: Optional[str] = None
