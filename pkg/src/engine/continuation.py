"""The normalization function along a grid of regularization factors.

dN/dlambda = (N + R_z(P_N)) / lambda, where P_N reweights Q by 1/f''(dP/dQ).
The integrated path is checked node by node against direct root-finding.
"""

import logging
from typing import Callable, Literal, Optional, Sequence

import numpy as np
import pandas as pd

from ..core.concurrency import map_ordered
from ..core.errors import (
    ConfigurationError,
    DriftError,
    ErmFdrError,
    GeneratorContractError,
    InfeasibleBetaError,
)
from ..models.solver import OdePath, SolveConfig
from .generators import FGenerator
from .measure import SupportedMeasure
from .normalize import residual_F, residual_partials, solve_normalization
from .risk import RiskField, expected_risk
from .tilt import tilt_measure

logger = logging.getLogger(__name__)

StepperName = Literal["rk4", "heun"]
Slope = Callable[[float, float], float]


def auxiliary_measure(
    gen: FGenerator, mu: SupportedMeasure, field: RiskField, lambda_: float, beta: float
) -> SupportedMeasure:
    """P_N with weights proportional to q_i / f''(rn_i).

    Atoms whose density underflowed to zero keep the smallest positive weight.
    """
    tilted = tilt_measure(gen, mu, field, lambda_, beta)
    rn = tilted.rn_values
    positive = rn > 0
    curvature = np.asarray(gen.d2f(rn[positive]), dtype=float)
    if not np.all(curvature > 0):
        i = int(np.argmax(~(curvature > 0)))
        raise GeneratorContractError(
            f"{gen.name}: f'' = {curvature[i]!r} at x = {rn[positive][i]!r}, expected > 0"
        )
    inverse_curvature = np.zeros_like(rn)
    inverse_curvature[positive] = 1.0 / curvature
    weights = mu.weights * inverse_curvature
    return mu.reweighted(np.maximum(weights / weights.sum(), np.finfo(float).tiny))


def n_derivative(
    gen: FGenerator, mu: SupportedMeasure, field: RiskField, lambda_: float, beta: float
) -> float:
    aux = auxiliary_measure(gen, mu, field, lambda_, beta)
    return (beta + expected_risk(aux, field)) / lambda_


def implicit_derivative(
    gen: FGenerator, mu: SupportedMeasure, field: RiskField, lambda_: float, beta: float
) -> float:
    """-(dF/db)^-1 dF/da from the implicit function theorem."""
    d_a, d_b = residual_partials(gen, mu, field, lambda_, beta)
    return -d_a / d_b


def derivative_agreement(
    gen: FGenerator, mu: SupportedMeasure, field: RiskField, lambda_: float, beta: float
) -> float:
    return abs(
        implicit_derivative(gen, mu, field, lambda_, beta)
        - n_derivative(gen, mu, field, lambda_, beta)
    )


def ode_residual(
    gen: FGenerator,
    mu: SupportedMeasure,
    field: RiskField,
    lambda_: float,
    beta: float,
    dn: float,
) -> float:
    """N - (lambda * dN/dlambda - R_z(P_N)); zero along the true path."""
    aux = auxiliary_measure(gen, mu, field, lambda_, beta)
    return beta - (lambda_ * dn - expected_risk(aux, field))


def rk4_step(slope: Slope, x: float, y: float, h: float) -> float:
    k1 = slope(x, y)
    k2 = slope(x + h / 2, y + h * k1 / 2)
    k3 = slope(x + h / 2, y + h * k2 / 2)
    k4 = slope(x + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * (k2 + k3) + k4)


def heun_step(slope: Slope, x: float, y: float, h: float) -> float:
    k1 = slope(x, y)
    k2 = slope(x + h, y + h * k1)
    return y + h / 2 * (k1 + k2)


STEPPERS: dict[str, Callable[[Slope, float, float, float], float]] = {
    "rk4": rk4_step,
    "heun": heun_step,
}


def _classify(values: Sequence[float]) -> str:
    steps = np.diff(np.asarray(values, dtype=float))
    scale = 1e-12 * (1.0 + np.abs(np.asarray(values[1:], dtype=float)))
    if np.all(np.abs(steps) <= scale):
        return "constant"
    if np.all(steps > 0):
        return "increasing"
    if np.all(steps < 0):
        return "decreasing"
    return "none"


def _validate_grid(grid: Sequence[float], lambda0: float) -> list[float]:
    lambdas = [float(x) for x in grid]
    if not lambdas:
        raise ConfigurationError("continuation grid is empty")
    if any(not x > 0 for x in lambdas):
        raise ConfigurationError("continuation grid must be positive")
    if any(b <= a for a, b in zip(lambdas, lambdas[1:])):
        raise ConfigurationError("continuation grid must be strictly increasing")
    if abs(lambdas[0] - lambda0) > 1e-12 * lambda0:
        raise ConfigurationError(f"grid starts at {lambdas[0]!r}, not at lambda0={lambda0!r}")
    return lambdas


def integrate_path(
    gen: FGenerator,
    mu: SupportedMeasure,
    field: RiskField,
    lambda0: float,
    beta0: float,
    grid: Sequence[float],
    stepper: StepperName = "rk4",
    cfg: SolveConfig | None = None,
    workers: int = 1,
) -> OdePath:
    """Integrate N from (lambda0, beta0) across ``grid`` and compare with direct solves.

    A node where the tilt becomes infeasible ends the path there and is
    reported in ``truncated_at``.
    """
    cfg = cfg or SolveConfig()
    lambdas = _validate_grid(grid, lambda0)
    try:
        step = STEPPERS[stepper]
    except KeyError:
        raise ConfigurationError(
            f"Unknown stepper '{stepper}'. Expected one of: {', '.join(STEPPERS)}"
        ) from None
    residual = residual_F(gen, mu, field, lambda0, beta0)
    if abs(residual) > cfg.epsilon:
        raise ConfigurationError(
            f"initial condition does not normalize: residual {residual!r} at lambda0={lambda0!r}"
        )

    def slope(lambda_: float, beta: float) -> float:
        return n_derivative(gen, mu, field, lambda_, beta)

    n_values = [beta0]
    truncated_at: Optional[float] = None
    for x, x_next in zip(lambdas, lambdas[1:]):
        try:
            n_values.append(step(slope, x, n_values[-1], x_next - x))
        except (InfeasibleBetaError, GeneratorContractError) as exc:
            truncated_at = x_next
            logger.warning(f"Path truncated at lambda={x_next!r}: {exc}")
            break
    lambdas = lambdas[: len(n_values)]

    def direct(lambda_: float) -> Optional[float]:
        try:
            return solve_normalization(gen, mu, field, lambda_, cfg).beta
        except ErmFdrError as exc:
            logger.error(f"Direct solve failed at lambda={lambda_!r}: {exc}")
            return None

    n_direct = map_ordered(direct, lambdas, workers)
    rel_err: list[Optional[float]] = [
        None if d is None else abs(n - d) / max(abs(d), 1.0)
        for n, d in zip(n_values, n_direct)
    ]
    known = [e for e in rel_err if e is not None]
    max_rel_err = max(known) if known else 0.0

    disagreement = 0.0
    for x, n in zip(lambdas, n_values):
        try:
            disagreement = max(disagreement, derivative_agreement(gen, mu, field, x, n))
        except InfeasibleBetaError:
            continue

    path = OdePath(
        lambdas=lambdas,
        n_values=n_values,
        n_direct=n_direct,
        rel_err=rel_err,
        max_rel_err=max_rel_err,
        derivative_disagreement=disagreement,
        monotone=_classify(n_values),
        truncated_at=truncated_at,
    )
    logger.info(
        f"Path over {len(lambdas)} nodes: max rel err {max_rel_err:.2e}, "
        f"derivative disagreement {disagreement:.2e}, {path.monotone}"
    )
    if max_rel_err > cfg.drift_ceiling:
        raise DriftError(max_rel_err, cfg.drift_ceiling, path)
    return path


def path_frame(path: OdePath) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "lambda": path.lambdas,
            "n_ode": path.n_values,
            "n_direct": path.n_direct,
            "rel_err": path.rel_err,
        }
    )
