"""Batch pipelines behind the command line: sweeps, certification, paths and lambda*."""

import json
import logging
from dataclasses import dataclass, field
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Optional

import pandas as pd
from pydantic import BaseModel, ValidationError

from ..core.concurrency import map_ordered
from ..core.errors import ConfigurationError, DriftError, ErmFdrError
from ..models.experiment import (
    DatasetRiskSpec,
    DiscreteMeasureSpec,
    ExperimentConfig,
    GridMeasureSpec,
    SampleMeasureSpec,
    SweepRow,
)
from ..models.solver import (
    DualReport,
    LambdaStarEstimate,
    OdePath,
    SolveConfig,
    TiltedSolutionRead,
)
from .continuation import integrate_path, path_frame
from .dual import dual_objective, solve_dual
from .generators import FGenerator, builtin_generator
from .measure import (
    QuadratureGrid,
    SupportedMeasure,
    builtin_distribution,
    discretize_density,
    sample_measure,
)
from .normalize import (
    attempt_normalization,
    closed_form_normalization,
    estimate_lambda_star,
    require_separable,
)
from .risk import Dataset, RiskField, named_risk_field
from .tilt import primal_value, tilt_measure

logger = logging.getLogger(__name__)

ROW_COLUMNS = [
    "lambda",
    "beta",
    "primal",
    "dual",
    "gap",
    "iterations",
    "feasible",
    "delta_star",
    "closed_form",
    "failure_reason",
]


def package_version() -> str:
    try:
        return version("ermfdr")
    except PackageNotFoundError:
        return "0.0.0"


def load_experiment(path: str | Path) -> ExperimentConfig:
    """Parse and validate a JSON experiment file."""
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read experiment file {path}: {exc}") from exc
    try:
        return ExperimentConfig.model_validate_json(raw)
    except ValidationError as exc:
        raise ConfigurationError(f"invalid experiment file {path}: {exc}") from exc


def build_measure(config: ExperimentConfig, seed: Optional[int] = None) -> SupportedMeasure:
    spec = config.measure
    if isinstance(spec, DiscreteMeasureSpec):
        return SupportedMeasure.discrete(spec.points, spec.weights)
    if isinstance(spec, GridMeasureSpec):
        dist = builtin_distribution(spec.density, spec.loc, spec.scale)
        return discretize_density(dist.pdf, QuadratureGrid.uniform(spec.low, spec.high, spec.nodes))
    if isinstance(spec, SampleMeasureSpec):
        return sample_measure(
            spec.distribution, spec.n, spec.seed if seed is None else seed, spec.loc, spec.scale
        )
    raise ConfigurationError(f"unsupported measure spec {spec!r}")


def build_field(config: ExperimentConfig, mu: SupportedMeasure) -> RiskField:
    spec = config.risk
    if isinstance(spec, DatasetRiskSpec):
        return named_risk_field(
            Dataset.from_pairs(spec.pairs), spec.model, spec.loss, mu, spec.margin
        )
    return RiskField.on_measure(spec.risk_values, mu)


@dataclass
class Instance:
    gen: FGenerator
    mu: SupportedMeasure
    field: RiskField

    def hashes(self) -> dict[str, str]:
        return {"measure": self.mu.digest, "risk": self.field.digest}


class ExperimentSummary(BaseModel):
    version: str
    mode: str
    generator: str
    config: dict
    solver: SolveConfig
    hashes: dict[str, str]
    rows: int
    infeasible: int
    duals: list[DualReport] = []
    lambda_star: Optional[LambdaStarEstimate] = None
    path: Optional[OdePath] = None
    path_error: Optional[str] = None


@dataclass
class ExperimentResult:
    rows: pd.DataFrame
    summary: ExperimentSummary
    path_rows: Optional[pd.DataFrame] = None
    solutions: list[TiltedSolutionRead] = field(default_factory=list)
    written: list[Path] = field(default_factory=list)


def _failure(exc: Exception) -> str:
    return f"{type(exc).__name__}: {exc}"


def _check_normalization(inst: Instance, lambda_: float, beta: float, cfg: SolveConfig) -> None:
    error = tilt_measure(inst.gen, inst.mu, inst.field, lambda_, beta).normalization_error
    if error > 2 * cfg.epsilon:
        raise ErmFdrError(f"re-materialized weights miss normalization by {error!r}")


def solve_row(inst: Instance, lambda_: float, cfg: SolveConfig) -> SweepRow:
    """Primal solve at one lambda, with the dual objective evaluated at the same beta."""
    row = SweepRow(
        lambda_=lambda_,
        delta_star=inst.field.delta_star,
        closed_form=closed_form_normalization(inst.gen, inst.mu, inst.field, lambda_),
    )
    report = attempt_normalization(inst.gen, inst.mu, inst.field, lambda_, cfg)
    if not report.feasible:
        return row.model_copy(update={"failure_reason": report.failure_reason})
    try:
        tilted = tilt_measure(inst.gen, inst.mu, inst.field, lambda_, report.beta)
        primal = primal_value(inst.gen, tilted, inst.field)
        dual = dual_objective(inst.gen, inst.mu, inst.field, lambda_, report.beta)
        _check_normalization(inst, lambda_, report.beta, cfg)
    except ErmFdrError as exc:
        logger.error(f"lambda={lambda_!r}: {exc}")
        return row.model_copy(update={"failure_reason": _failure(exc)})
    return row.model_copy(
        update={
            "beta": report.beta,
            "primal": primal,
            "dual": dual,
            "gap": primal + dual,
            "iterations": report.iterations,
            "feasible": True,
        }
    )


def certify_row(
    inst: Instance, lambda_: float, cfg: SolveConfig
) -> tuple[SweepRow, Optional[DualReport]]:
    """Primal and dual solved independently; the row carries the dual's gap."""
    row = solve_row(inst, lambda_, cfg)
    if not row.feasible:
        return row, None
    try:
        report = solve_dual(inst.gen, inst.mu, inst.field, lambda_, cfg)
    except ErmFdrError as exc:
        logger.error(f"Dual failed at lambda={lambda_!r}: {exc}")
        return row.model_copy(update={"feasible": False, "failure_reason": _failure(exc)}), None
    update = {"dual": report.dual_value, "gap": report.gap}
    if not report.certified:
        update["failure_reason"] = f"uncertified: gap {report.gap!r}"
    return row.model_copy(update=update), report


def rows_frame(rows: list[SweepRow]) -> pd.DataFrame:
    records = [row.model_dump(by_alias=True) for row in rows]
    return pd.DataFrame.from_records(records, columns=ROW_COLUMNS)


def run_experiment(
    config: ExperimentConfig,
    cfg: SolveConfig,
    out_dir: Optional[str | Path] = None,
    workers: int = 1,
    seed: Optional[int] = None,
) -> ExperimentResult:
    """Run ``config.mode`` over the lambda grid and write CSV and JSON artifacts.

    Per-lambda failures become rows with ``feasible`` false. A path that
    drifts past the ceiling is still written before the drift error propagates.
    """
    mu = build_measure(config, seed)
    inst = Instance(builtin_generator(config.generator), mu, build_field(config, mu))
    require_separable(inst.field)
    grid = config.lambda_grid
    logger.info(
        f"{config.mode}: {config.generator} on {mu.size} atoms, {len(grid)} lambdas, "
        f"{workers} workers"
    )

    duals: list[DualReport] = []
    if config.mode == "certify":
        results = map_ordered(lambda x: certify_row(inst, x, cfg), grid, workers)
        rows = [row for row, _ in results]
        duals = [report for _, report in results if report is not None]
    else:
        rows = map_ordered(lambda x: solve_row(inst, x, cfg), grid, workers)

    summary = ExperimentSummary(
        version=package_version(),
        mode=config.mode,
        generator=config.generator,
        config=config.model_dump(mode="json"),
        solver=cfg,
        hashes=inst.hashes(),
        rows=len(rows),
        infeasible=sum(not row.feasible for row in rows),
        duals=duals,
    )
    solutions = [
        tilt_measure(inst.gen, inst.mu, inst.field, row.lambda_, row.beta).to_read()
        for row in rows
        if row.feasible
    ]
    result = ExperimentResult(rows=rows_frame(rows), summary=summary, solutions=solutions)

    drift: Optional[DriftError] = None
    if config.mode == "lambda_star":
        summary.lambda_star = estimate_lambda_star(
            inst.gen, inst.mu, inst.field, config.probe_range, cfg
        )
    elif config.mode == "path":
        drift = _run_path(inst, grid, rows, config, cfg, workers, result)

    if out_dir is not None:
        _write(result, config, Path(out_dir))
    if drift is not None:
        raise drift
    return result


def _run_path(inst, grid, rows, config, cfg, workers, result) -> Optional[DriftError]:
    start = rows[0]
    if not start.feasible:
        result.summary.path_error = f"no normalization at the first node: {start.failure_reason}"
        logger.error(result.summary.path_error)
        return None
    try:
        path = integrate_path(
            inst.gen, inst.mu, inst.field, grid[0], start.beta, grid, config.stepper, cfg, workers
        )
    except DriftError as exc:
        path, drift = exc.path, exc
        result.summary.path_error = str(exc)
    else:
        drift = None
    result.summary.path = path
    if path is not None:
        result.path_rows = path_frame(path)
    return drift


def _write(result: ExperimentResult, config: ExperimentConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    rows_file = out_dir / config.output.rows
    result.rows.to_csv(rows_file, index=False, float_format="%.17g")
    result.written.append(rows_file)
    if result.path_rows is not None:
        path_file = out_dir / config.output.path
        result.path_rows.to_csv(path_file, index=False, float_format="%.17g")
        result.written.append(path_file)
    if config.output.solutions and result.solutions:
        solutions_file = out_dir / config.output.solutions
        payload = [s.model_dump(mode="json", by_alias=True) for s in result.solutions]
        solutions_file.write_text(json.dumps(payload, indent=2) + "\n")
        result.written.append(solutions_file)
    summary_file = out_dir / config.output.summary
    payload = result.summary.model_dump(mode="json", by_alias=True)
    summary_file.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n")
    result.written.append(summary_file)
    logger.info(f"Wrote {', '.join(str(p) for p in result.written)}")

