"""The Legendre-Fenchel dual of ERM-fDR and the zero-gap certificate.

G(beta) = lambda * E_Q[f*(-(beta + L)/lambda)] + beta is strictly convex;
its minimizer is the normalization constant. The dual is bracketed and
bisected on its own, sharing only the generator bundle with the primal
solver, so agreement between the two is a genuine cross-check.
"""

import logging
import math

import numpy as np

from ..core.errors import (
    ConfigurationError,
    InfeasibleBetaError,
    InfeasibleLambdaError,
    NoConvergenceError,
)
from ..models.solver import DualReport, SolveConfig
from .generators import FGenerator
from .measure import SupportedMeasure
from .normalize import require_separable
from .risk import RiskField
from .tilt import primal_value, tilt_arguments, tilt_measure

logger = logging.getLogger(__name__)


def dual_objective(
    gen: FGenerator, mu: SupportedMeasure, field: RiskField, lambda_: float, beta: float
) -> float:
    field.aligned_with(mu)
    t = tilt_arguments(field, lambda_, beta)
    return lambda_ * float(np.sum(mu.weights * gen.conjugate(t))) + beta


def dual_gradient(
    gen: FGenerator, mu: SupportedMeasure, field: RiskField, lambda_: float, beta: float
) -> float:
    """dG/dbeta = 1 - E_Q[f*'(-(beta + L)/lambda)]."""
    field.aligned_with(mu)
    t = tilt_arguments(field, lambda_, beta)
    with np.errstate(over="ignore"):
        return 1.0 - float(np.sum(mu.weights * gen.conjugate_derivative(t)))


def dual_curvature(
    gen: FGenerator, mu: SupportedMeasure, field: RiskField, lambda_: float, beta: float
) -> float:
    """d2G/dbeta2 = E_Q[1 / f''(f*'(t))] / lambda, zero where f*' vanishes."""
    t = tilt_arguments(field, lambda_, beta)
    slopes = np.asarray(gen.conjugate_derivative(t), dtype=float)
    curvature = np.zeros_like(slopes)
    active = slopes > 0
    curvature[active] = 1.0 / np.asarray(gen.d2f(slopes[active]), dtype=float)
    return float(np.sum(mu.weights * curvature)) / lambda_


def dual_beta_interval(
    gen: FGenerator, field: RiskField, lambda_: float
) -> tuple[float, float]:
    """Open beta interval on which every conjugate argument lies in J."""
    domain = gen.conjugate_domain
    lower = -lambda_ * domain.high - field.delta_star if math.isfinite(domain.high) else -math.inf
    upper = -lambda_ * domain.low - field.max_value if math.isfinite(domain.low) else math.inf
    return lower, upper


def _descend(gen, mu, field, lambda_, start, lower, cfg) -> float:
    """A beta below ``start`` where the dual gradient is negative."""
    for k in range(1, cfg.max_bracket_expansions + 1):
        if math.isfinite(lower):
            beta = lower + (start - lower) * 0.5**k
        else:
            beta = start - lambda_ * cfg.bracket_growth ** (k - 1)
        if dual_gradient(gen, mu, field, lambda_, beta) < 0:
            return beta
    raise InfeasibleLambdaError(
        f"dual gradient stayed nonnegative down to beta={beta!r} at lambda={lambda_!r}",
        lambda_,
    )


def solve_dual(
    gen: FGenerator,
    mu: SupportedMeasure,
    field: RiskField,
    lambda_: float,
    cfg: SolveConfig | None = None,
) -> DualReport:
    """Minimize G by bisection on its gradient and certify the duality gap."""
    cfg = cfg or SolveConfig()
    require_separable(field)
    field.aligned_with(mu)
    if not lambda_ > 0:
        raise ConfigurationError(f"regularization factor must be positive, got {lambda_!r}")
    tolerance = cfg.dual_gradient_tolerance

    lower, upper = dual_beta_interval(gen, field, lambda_)
    # At this beta the best model gets density one and every other model less,
    # so the gradient is positive.
    hi = -field.delta_star - lambda_ * gen.df_at_one
    if not lower < hi < upper:
        raise InfeasibleLambdaError(f"dual seed outside J at lambda={lambda_!r}", lambda_)
    lo = _descend(gen, mu, field, lambda_, hi, lower, cfg)

    beta = hi
    grad = dual_gradient(gen, mu, field, lambda_, beta)
    iterations = 0
    while abs(grad) > tolerance and iterations < cfg.max_iters:
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        iterations += 1
        value = dual_gradient(gen, mu, field, lambda_, mid)
        if abs(value) < abs(grad):
            beta, grad = mid, value
        if value > 0:
            hi = mid
        elif value < 0:
            lo = mid
        else:
            break
    if abs(grad) > tolerance:
        raise NoConvergenceError(
            f"dual gradient {grad!r} above tolerance {tolerance!r}", (lo, hi), iterations
        )

    curvature = dual_curvature(gen, mu, field, lambda_, beta)
    if curvature > 0:
        candidate = beta - grad / curvature
        if lo <= candidate <= hi:
            polished = dual_gradient(gen, mu, field, lambda_, candidate)
            if abs(polished) < abs(grad):
                beta, grad = candidate, polished

    try:
        tilted = tilt_measure(gen, mu, field, lambda_, beta)
    except InfeasibleBetaError as exc:
        raise InfeasibleLambdaError(
            f"dual minimizer at lambda={lambda_!r} leaves some model with zero density: {exc}",
            lambda_,
        ) from exc

    dual_value = dual_objective(gen, mu, field, lambda_, beta)
    primal = primal_value(gen, tilted, field)
    gap = primal + dual_value
    certified = abs(gap) <= cfg.gap_tolerance * (1.0 + abs(primal)) and abs(grad) <= tolerance
    if certified:
        logger.info(f"Dual certified at lambda={lambda_:.6g}: beta={beta:.12g}, gap={gap:.2e}")
    else:
        logger.warning(f"Duality gap {gap!r} exceeds tolerance at lambda={lambda_!r}")
    return DualReport(
        beta_hat=beta,
        dual_value=dual_value,
        primal_value=primal,
        gap=gap,
        grad_norm_at_opt=abs(grad),
        iterations=iterations,
        bracket=(lo, hi),
        certified=certified,
    )
