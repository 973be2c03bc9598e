"""The ERM-fDR minimizer as a tilt of the reference measure.

For a regularization factor lambda and a normalization constant beta the
Radon-Nikodym derivative at theta is f'^-1(-(beta + L(theta)) / lambda).
Nothing here renormalizes: a correct beta is the caller's responsibility.
"""

import logging
from dataclasses import dataclass

import numpy as np

from ..core.errors import ConfigurationError, InfeasibleBetaError
from ..models.solver import TiltedSolutionRead
from .generators import FGenerator
from .measure import SupportedMeasure
from .risk import RiskField, expected_risk

logger = logging.getLogger(__name__)


def tilt_arguments(field: RiskField, lambda_: float, beta: float) -> np.ndarray:
    if not lambda_ > 0:
        raise ConfigurationError(f"regularization factor must be positive, got {lambda_!r}")
    return -(beta + field.values) / lambda_


def infeasibility(
    gen: FGenerator, mu: SupportedMeasure, t: np.ndarray, beta: float
) -> InfeasibleBetaError | None:
    """The first support point whose tilt argument leaves dom f'^-1, if any."""
    inside = gen.df_inv_domain.contains(t)
    if np.all(inside):
        return None
    i = int(np.argmax(~inside))
    too_high = bool(t[i] >= gen.df_inv_domain.high)
    return InfeasibleBetaError(mu.points[i].tolist(), float(t[i]), beta, too_high)


@dataclass(frozen=True, eq=False)
class TiltedSolution:
    base: SupportedMeasure
    rn_values: np.ndarray
    lambda_: float
    beta: float

    @property
    def tilted_weights(self) -> np.ndarray:
        return self.base.weights * self.rn_values

    # Lets a tilted solution stand in for a measure in expected_risk.
    @property
    def weights(self) -> np.ndarray:
        return self.tilted_weights

    @property
    def size(self) -> int:
        return self.base.size

    @property
    def normalization_error(self) -> float:
        return abs(float(np.sum(self.tilted_weights)) - 1.0)

    def to_read(self) -> TiltedSolutionRead:
        return TiltedSolutionRead(
            lambda_=self.lambda_,
            beta=self.beta,
            points=self.base.points.tolist(),
            rn_values=self.rn_values.tolist(),
            tilted_weights=self.tilted_weights.tolist(),
        )


def tilt_measure(
    gen: FGenerator,
    mu: SupportedMeasure,
    field: RiskField,
    lambda_: float,
    beta: float,
) -> TiltedSolution:
    """Evaluate dP/dQ = f'^-1(-(beta + L)/lambda) on the support of ``mu``."""
    field.aligned_with(mu)
    t = tilt_arguments(field, lambda_, beta)
    violation = infeasibility(gen, mu, t, beta)
    if violation is not None:
        raise violation
    # Inside the domain f'^-1 is positive; a zero here is underflow, not infeasibility.
    with np.errstate(over="ignore", under="ignore"):
        rn_values = np.asarray(gen.df_inv(t), dtype=float)
    overflowed = ~np.isfinite(rn_values)
    if np.any(overflowed):
        i = int(np.argmax(overflowed))
        raise InfeasibleBetaError(mu.points[i].tolist(), float(t[i]), beta, True)
    return TiltedSolution(mu, rn_values, lambda_, beta)


def f_divergence(gen: FGenerator, tilted: TiltedSolution) -> float:
    """D_f(P || Q) = sum_i q_i f(dP/dQ(theta_i))."""
    return float(np.sum(tilted.base.weights * gen.f(tilted.rn_values)))


def primal_value(gen: FGenerator, tilted: TiltedSolution, field: RiskField) -> float:
    """R_z(P) + lambda * D_f(P || Q)."""
    return expected_risk(tilted, field) + tilted.lambda_ * f_divergence(gen, tilted)
