import math

import numpy as np
import pytest

from src.core.errors import (
    ConfigurationError,
    DegenerateInstanceError,
    InfeasibleBetaError,
    InfeasibleLambdaError,
)
from src.engine.generators import GENERATOR_NAMES, builtin_generator
from src.engine.measure import SupportedMeasure
from src.engine.normalize import (
    attempt_normalization,
    check_feasibility,
    closed_form_normalization,
    estimate_lambda_star,
    feasible_beta_interval,
    residual_F,
    residual_partials,
    solve_normalization,
)
from src.engine.risk import RiskField
from src.engine.tilt import tilt_measure
from src.models.solver import SolveConfig
from tests.conftest import KL_BETA


def test_residual_at_kl_root(two_atoms, zero_one_field):
    gen = builtin_generator("kl")
    assert residual_F(gen, two_atoms, zero_one_field, 1.0, -1.379885) == pytest.approx(0.0, abs=1e-5)


def test_residual_is_zero_for_constant_risk(gen, two_atoms):
    c, a = 0.7, 3.0
    field = RiskField.from_values([c, c])
    assert residual_F(gen, two_atoms, field, a, -a * gen.df_at_one - c) == pytest.approx(
        0.0, abs=1e-15
    )


def test_chi_square_residual(two_atoms, zero_one_field):
    gen = builtin_generator("chi_square")
    assert residual_F(gen, two_atoms, zero_one_field, 1.0, 0.0) == pytest.approx(-0.25, abs=1e-15)


def test_residual_raises_outside_domain(two_atoms, zero_one_field):
    with pytest.raises(InfeasibleBetaError):
        residual_F(builtin_generator("squared_hellinger"), two_atoms, zero_one_field, 1.0, -2.0)


def test_residual_is_decreasing_in_beta(gen, two_atoms, zero_one_field):
    lo, hi = feasible_beta_interval(gen, zero_one_field, 2.0)
    start = max(lo, -10.0) + 0.1
    stop = min(hi, 10.0) - 0.1
    values = [residual_F(gen, two_atoms, zero_one_field, 2.0, b) for b in np.linspace(start, stop, 25)]
    assert all(b < a for a, b in zip(values, values[1:]))


def test_residual_partials_match_finite_differences(gen, two_atoms, zero_one_field):
    a, b = 2.0, solve_normalization(gen, two_atoms, zero_one_field, 2.0).beta
    d_a, d_b = residual_partials(gen, two_atoms, zero_one_field, a, b)
    h = 1e-6
    fd_a = (
        residual_F(gen, two_atoms, zero_one_field, a + h, b)
        - residual_F(gen, two_atoms, zero_one_field, a - h, b)
    ) / (2 * h)
    fd_b = (
        residual_F(gen, two_atoms, zero_one_field, a, b + h)
        - residual_F(gen, two_atoms, zero_one_field, a, b - h)
    ) / (2 * h)
    assert d_a == pytest.approx(fd_a, rel=1e-6, abs=1e-9)
    assert d_b == pytest.approx(fd_b, rel=1e-6, abs=1e-9)


def test_kl_two_atom_solution(two_atoms, zero_one_field):
    report = solve_normalization(builtin_generator("kl"), two_atoms, zero_one_field, 1.0)
    assert report.beta == pytest.approx(-1.379885, abs=1e-6)
    assert report.beta == pytest.approx(KL_BETA, abs=1e-12)
    assert abs(report.residual) <= 1e-10
    assert report.iterations <= 200


def test_chi_square_two_atom_solution(two_atoms, zero_one_field):
    report = solve_normalization(builtin_generator("chi_square"), two_atoms, zero_one_field, 1.0)
    assert report.beta == pytest.approx(-0.5, abs=1e-8)


def test_reverse_kl_two_atom_solution(two_atoms, zero_one_field):
    report = solve_normalization(builtin_generator("reverse_kl"), two_atoms, zero_one_field, 1.0)
    assert report.beta == pytest.approx(1 / math.sqrt(2), abs=1e-6)


def test_kl_at_tiny_lambda():
    mu = SupportedMeasure.discrete([[0.0], [1.0]])
    field = RiskField.from_values([0.0, 1.0])
    report = solve_normalization(builtin_generator("kl"), mu, field, 1e-6)
    assert report.beta == pytest.approx(-math.log(2) * 1e-6 - 1e-6, rel=1e-6)


def test_matches_closed_form_on_random_instances(instances):
    for inst in instances("kl", 30, seed=11):
        beta = solve_normalization(inst.gen, inst.mu, inst.field, inst.lambda_).beta
        expected = closed_form_normalization(inst.gen, inst.mu, inst.field, inst.lambda_)
        assert beta == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("name", GENERATOR_NAMES)
def test_normalization_contract(name, instances):
    cfg = SolveConfig()
    for inst in instances(name, 50, seed=3):
        report = solve_normalization(inst.gen, inst.mu, inst.field, inst.lambda_, cfg)
        tilted = tilt_measure(inst.gen, inst.mu, inst.field, inst.lambda_, report.beta)
        assert tilted.normalization_error <= 2 * cfg.epsilon
        assert report.iterations <= cfg.max_iters
        lo, hi = report.bracket
        assert lo <= report.beta <= hi


def test_bracket_history_records_expansion(two_atoms, zero_one_field):
    report = solve_normalization(builtin_generator("chi_square"), two_atoms, zero_one_field, 1.0)
    assert len(report.bracket_history) >= 2
    assert report.expansions >= 1


def test_degenerate_field_is_refused(gen, two_atoms):
    with pytest.raises(DegenerateInstanceError):
        solve_normalization(gen, two_atoms, RiskField.from_values([0.5, 0.5]), 1.0)


def test_lambda_must_be_positive(two_atoms, zero_one_field):
    with pytest.raises(ConfigurationError):
        solve_normalization(builtin_generator("kl"), two_atoms, zero_one_field, -1.0)


def test_chi_square_below_threshold_is_infeasible(two_atoms, zero_one_field):
    with pytest.raises(InfeasibleLambdaError):
        solve_normalization(builtin_generator("chi_square"), two_atoms, zero_one_field, 0.2)
    assert not check_feasibility(builtin_generator("chi_square"), two_atoms, zero_one_field, 0.2, -0.5)


def test_chi_square_lambda_star(two_atoms, zero_one_field):
    estimate = estimate_lambda_star(
        builtin_generator("chi_square"), two_atoms, zero_one_field, (1e-3, 10.0)
    )
    assert estimate.value == pytest.approx(0.25, abs=1e-3)
    lo, hi = estimate.bracket
    assert lo <= 0.25 <= hi


def test_lambda_star_at_lower_probe_for_kl(two_atoms, zero_one_field):
    estimate = estimate_lambda_star(builtin_generator("kl"), two_atoms, zero_one_field, (0.01, 10.0))
    assert estimate.at_lower_bound
    assert estimate.value == 0.01


def test_lambda_star_probe_range_is_validated(two_atoms, zero_one_field):
    with pytest.raises(ConfigurationError):
        estimate_lambda_star(builtin_generator("kl"), two_atoms, zero_one_field, (1.0, 0.5))


def test_feasibility_is_upward_closed(instances):
    """Success at lambda implies success at 2 lambda."""
    rng = np.random.default_rng(5)
    for inst in instances("chi_square", 100, seed=5):
        lam = float(rng.uniform(0.05, 2.0))
        try:
            solve_normalization(inst.gen, inst.mu, inst.field, lam)
        except InfeasibleLambdaError:
            continue
        solve_normalization(inst.gen, inst.mu, inst.field, 2 * lam)


def test_chi_square_closed_form_respects_feasibility(two_atoms, zero_one_field):
    gen = builtin_generator("chi_square")
    assert closed_form_normalization(gen, two_atoms, zero_one_field, 1.0) == -0.5
    assert closed_form_normalization(gen, two_atoms, zero_one_field, 0.2) is None
    assert closed_form_normalization(builtin_generator("reverse_kl"), two_atoms, zero_one_field, 1.0) is None


def test_attempt_reports_infeasible_lambda(two_atoms, zero_one_field):
    report = attempt_normalization(builtin_generator("chi_square"), two_atoms, zero_one_field, 0.2)
    assert not report.feasible
    assert report.failure_reason.startswith("InfeasibleLambdaError")
    assert math.isnan(report.beta)


def test_attempt_reports_exhausted_iterations(two_atoms, zero_one_field):
    cfg = SolveConfig(epsilon=1e-300, max_iters=2)
    report = attempt_normalization(builtin_generator("reverse_kl"), two_atoms, zero_one_field, 1.0, cfg)
    assert not report.feasible
    assert report.failure_reason.startswith("NoConvergenceError")
    assert report.iterations == 2


def test_attempt_passes_through_success_and_degeneracy(two_atoms, zero_one_field):
    report = attempt_normalization(builtin_generator("chi_square"), two_atoms, zero_one_field, 1.0)
    assert report.feasible
    assert report.failure_reason is None
    assert report.beta == pytest.approx(-0.5, abs=1e-10)
    with pytest.raises(DegenerateInstanceError):
        attempt_normalization(
            builtin_generator("kl"), two_atoms, RiskField.from_values([1.0, 1.0]), 1.0
        )
