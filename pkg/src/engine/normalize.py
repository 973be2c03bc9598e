"""Normalization function N(lambda) by bracketed bisection.

F(a, b) = E_Q[f'^-1(-(b + L)/a)] - 1 is strictly decreasing in b, so the
bracket is kept as (b_lo, b_hi) with F(b_lo) > 0 > F(b_hi) and b_lo < b_hi,
regardless of which initial guess produced which end.
"""

import logging
import math
from functools import partial
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from ..core.errors import (
    ConfigurationError,
    DegenerateInstanceError,
    ErmFdrError,
    InfeasibleBetaError,
    InfeasibleLambdaError,
    NoConvergenceError,
)
from ..models.solver import LambdaStarEstimate, SolveConfig, SolveReport
from .generators import FGenerator
from .measure import SupportedMeasure
from .risk import RiskField, expected_risk
from .tilt import infeasibility, tilt_arguments

logger = logging.getLogger(__name__)


def require_separable(field: RiskField) -> None:
    if not field.separable:
        raise DegenerateInstanceError(
            "empirical risk is constant on the support of Q; the solution is Q itself"
        )


def residual_F(
    gen: FGenerator, mu: SupportedMeasure, field: RiskField, a: float, b: float
) -> float:
    """F(a, b) = E_Q[f'^-1(-(b + L)/a)] - 1.

    Returns +inf when f'^-1 overflows; the sign is what bracketing needs.
    """
    field.aligned_with(mu)
    t = tilt_arguments(field, a, b)
    violation = infeasibility(gen, mu, t, b)
    if violation is not None:
        raise violation
    with np.errstate(over="ignore"):
        rn = np.asarray(gen.df_inv(t), dtype=float)
        return float(np.sum(mu.weights * rn)) - 1.0


def residual_partials(
    gen: FGenerator, mu: SupportedMeasure, field: RiskField, a: float, b: float
) -> tuple[float, float]:
    """(dF/da, dF/db) at (a, b)."""
    field.aligned_with(mu)
    t = tilt_arguments(field, a, b)
    violation = infeasibility(gen, mu, t, b)
    if violation is not None:
        raise violation
    rn = np.asarray(gen.df_inv(t), dtype=float)
    inverse_curvature = np.zeros_like(rn)
    positive = rn > 0
    inverse_curvature[positive] = 1.0 / np.asarray(gen.d2f(rn[positive]), dtype=float)
    weighted = mu.weights * inverse_curvature
    d_a = float(np.sum(weighted * (b + field.values))) / a**2
    d_b = -float(np.sum(weighted)) / a
    return d_a, d_b


def feasible_beta_interval(
    gen: FGenerator, field: RiskField, lambda_: float
) -> tuple[float, float]:
    """Open interval of beta for which every tilt argument lies in dom f'^-1."""
    domain = gen.df_inv_domain
    b_min = -lambda_ * domain.high - field.delta_star if math.isfinite(domain.high) else -math.inf
    b_max = -lambda_ * domain.low - field.max_value if math.isfinite(domain.low) else math.inf
    return b_min, b_max


def check_feasibility(
    gen: FGenerator,
    mu: SupportedMeasure,
    field: RiskField,
    lambda_: float,
    beta: float,
) -> bool:
    """True iff f'^-1(-(beta + L)/lambda) exists and is positive on the whole support.

    That is exactly membership of every tilt argument in ``df_inv_domain``;
    floating-point underflow of the density does not count against it.
    """
    field.aligned_with(mu)
    t = tilt_arguments(field, lambda_, beta)
    return bool(np.all(gen.df_inv_domain.contains(t)))


def closed_form_normalization(
    gen: FGenerator, mu: SupportedMeasure, field: RiskField, lambda_: float
) -> Optional[float]:
    """N(lambda) for generators with a known closed form, else None."""
    values = field.aligned_with(mu)
    if gen.name == "kl":
        return float(lambda_ * logsumexp(-values / lambda_, b=mu.weights) - lambda_)
    if gen.name == "chi_square":
        beta = -expected_risk(mu, field)
        return beta if check_feasibility(gen, mu, field, lambda_, beta) else None
    return None


def _initial_candidates(gen: FGenerator, field: RiskField, lambda_: float) -> list[float]:
    high = lambda_
    if gen.has_finite_df_at_zero:
        low = field.delta_star - lambda_ * gen.df_at_zero
    else:
        low = -field.delta_star - lambda_ * gen.df_at_one - 1.0
    return [low, high]


def _pull_inside(b: float, b_min: float, b_max: float, scale: float) -> float:
    margin = min(scale, (b_max - b_min) / 2.0)
    if b >= b_max:
        return b_max - margin
    if b <= b_min:
        return b_min + margin
    return b


def _expand(
    F: Callable[[float], float],
    anchor: float,
    direction: int,
    want_positive: bool,
    step: float,
    cfg: SolveConfig,
    lambda_: float,
) -> tuple[float, float, int]:
    """Walk away from ``anchor`` with geometric steps until F has the wanted sign.

    An infeasible trial shrinks the step instead of aborting, since the
    feasible beta set is an interval containing the anchor.
    """
    for expansion in range(1, cfg.max_bracket_expansions + 1):
        trial = anchor + direction * step
        try:
            value = F(trial)
        except InfeasibleBetaError:
            step /= cfg.bracket_growth
            logger.debug(f"Expansion {expansion}: beta={trial!r} infeasible, step -> {step!r}")
            continue
        if value == 0 or (value > 0) == want_positive:
            return trial, value, expansion
        anchor = trial
        step *= cfg.bracket_growth
        logger.debug(f"Expansion {expansion}: F({trial!r})={value!r}, step -> {step!r}")
    side = "positive" if want_positive else "negative"
    raise InfeasibleLambdaError(
        f"could not reach a {side} residual within {cfg.max_bracket_expansions} expansions; "
        f"lambda={lambda_!r} is likely outside the feasible set",
        lambda_,
    )


def _report(beta, residual, iterations, bracket, history, expansions) -> SolveReport:
    return SolveReport(
        beta=beta,
        residual=residual,
        iterations=iterations,
        bracket=bracket,
        bracket_history=history,
        expansions=expansions,
        feasible=True,
    )


def solve_normalization(
    gen: FGenerator,
    mu: SupportedMeasure,
    field: RiskField,
    lambda_: float,
    cfg: SolveConfig | None = None,
) -> SolveReport:
    """Find beta = N(lambda) with |F(lambda, beta)| <= epsilon."""
    cfg = cfg or SolveConfig()
    require_separable(field)
    field.aligned_with(mu)
    if not lambda_ > 0:
        raise ConfigurationError(f"regularization factor must be positive, got {lambda_!r}")
    F = partial(residual_F, gen, mu, field, lambda_)

    b_min, b_max = feasible_beta_interval(gen, field, lambda_)
    if not b_min < b_max:
        raise InfeasibleLambdaError(f"no beta satisfies positivity at lambda={lambda_!r}", lambda_)
    candidates = [
        _pull_inside(b, b_min, b_max, lambda_)
        for b in _initial_candidates(gen, field, lambda_)
    ]
    evaluated = []
    for b in candidates:
        try:
            evaluated.append((b, F(b)))
        except InfeasibleBetaError as exc:
            logger.debug(f"Initial candidate rejected: {exc}")
    for b, value in evaluated:
        if value == 0:
            return _report(b, 0.0, 0, (b, b), [(b, b)], 0)
    if not evaluated:
        raise InfeasibleLambdaError(f"no feasible starting point at lambda={lambda_!r}", lambda_)

    positives = [(b, v) for b, v in evaluated if v > 0]
    negatives = [(b, v) for b, v in evaluated if v < 0]
    anchors = [b for b, _ in evaluated]
    history = [(min(anchors), max(anchors))]
    expansions = 0
    step = lambda_

    if positives:
        lo, f_lo = max(positives)
    else:
        lo, f_lo, used = _expand(F, min(anchors), -1, True, step, cfg, lambda_)
        expansions += used
    if negatives:
        hi, f_hi = min(negatives)
    else:
        hi, f_hi, used = _expand(F, max(anchors), +1, False, step, cfg, lambda_)
        expansions += used
    history.append((lo, hi))
    for b, value in ((lo, f_lo), (hi, f_hi)):
        if value == 0:
            return _report(b, 0.0, 0, (lo, hi), history, expansions)
    logger.debug(f"Bracket established after {expansions} expansions: ({lo!r}, {hi!r})")

    beta, residual = (lo, f_lo) if abs(f_lo) < abs(f_hi) else (hi, f_hi)
    iterations = 0
    converged = abs(residual) <= cfg.epsilon
    while not converged and iterations < cfg.max_iters:
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        iterations += 1
        value = F(mid)
        if abs(value) < abs(residual):
            beta, residual = mid, value
        if abs(value) <= cfg.epsilon:
            converged = True
        elif value > 0:
            lo = mid
        else:
            hi = mid

    if not converged:
        logger.error(
            f"Bisection stalled at lambda={lambda_!r}: residual {residual!r} after {iterations} iterations"
        )
        raise NoConvergenceError(
            f"residual {residual!r} above epsilon {cfg.epsilon!r}", (lo, hi), iterations
        )

    beta, residual = _newton_polish(gen, mu, field, lambda_, beta, residual, (lo, hi), F)
    logger.info(
        f"N({lambda_:.6g}) = {beta:.12g} (residual {residual:.2e}, {iterations} iterations)"
    )
    return _report(beta, residual, iterations, (lo, hi), history, expansions)


def attempt_normalization(
    gen: FGenerator,
    mu: SupportedMeasure,
    field: RiskField,
    lambda_: float,
    cfg: SolveConfig | None = None,
) -> SolveReport:
    """:func:`solve_normalization` for sweeps: an infeasible or unconverged
    lambda comes back as a report with ``feasible`` false instead of raising."""
    try:
        return solve_normalization(gen, mu, field, lambda_, cfg)
    except (ConfigurationError, DegenerateInstanceError):
        raise
    except ErmFdrError as exc:
        logger.error(f"lambda={lambda_!r}: {exc}")
        return SolveReport(
            beta=math.nan,
            residual=math.nan,
            iterations=getattr(exc, "iterations", 0),
            bracket=getattr(exc, "bracket", (math.nan, math.nan)),
            feasible=False,
            failure_reason=f"{type(exc).__name__}: {exc}",
        )


def _newton_polish(gen, mu, field, lambda_, beta, residual, bracket, F):
    """One Newton step on F(lambda, .) kept only if it stays in the bracket and improves."""
    try:
        _, slope = residual_partials(gen, mu, field, lambda_, beta)
    except InfeasibleBetaError:
        return beta, residual
    if slope == 0 or not math.isfinite(slope):
        return beta, residual
    candidate = beta - residual / slope
    if not bracket[0] <= candidate <= bracket[1]:
        return beta, residual
    try:
        value = F(candidate)
    except InfeasibleBetaError:
        return beta, residual
    if abs(value) < abs(residual):
        return candidate, value
    return beta, residual


def estimate_lambda_star(
    gen: FGenerator,
    mu: SupportedMeasure,
    field: RiskField,
    probe_range: tuple[float, float],
    cfg: SolveConfig | None = None,
    rtol: float = 1e-4,
) -> LambdaStarEstimate:
    """Left end of the feasible set of regularization factors.

    The feasible set is an interval unbounded above, so feasibility is
    bisected on a log scale until the probe bracket is within ``rtol``.
    """
    cfg = cfg or SolveConfig()
    require_separable(field)
    lo, hi = probe_range
    if not 0 < lo < hi:
        raise ConfigurationError(f"probe range must satisfy 0 < lo < hi, got {probe_range}")

    probes = 0

    def succeeds(lambda_: float) -> bool:
        nonlocal probes
        probes += 1
        try:
            solve_normalization(gen, mu, field, lambda_, cfg)
            return True
        except InfeasibleLambdaError:
            return False

    if succeeds(lo):
        logger.info(f"{gen.name}: feasible at the lower probe {lo!r}; lambda* <= {lo!r}")
        return LambdaStarEstimate(value=lo, at_lower_bound=True, bracket=(lo, lo), probes=probes)
    if not succeeds(hi):
        raise InfeasibleLambdaError(
            f"no feasible regularization factor up to {hi!r}; the feasible interval was not reached",
            hi,
        )
    while hi / lo > 1.0 + rtol:
        mid = math.sqrt(lo * hi)
        if succeeds(mid):
            hi = mid
        else:
            lo = mid
    estimate = math.sqrt(lo * hi)
    logger.info(f"{gen.name}: lambda* ~ {estimate:.6g} after {probes} probes")
    return LambdaStarEstimate(value=estimate, bracket=(lo, hi), probes=probes)
