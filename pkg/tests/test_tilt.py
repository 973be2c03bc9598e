import math

import numpy as np
import pytest

from src.core.errors import ConfigurationError, InfeasibleBetaError
from src.engine.experiment import Instance, certify_row, solve_row
from src.engine.generators import GENERATOR_NAMES, builtin_generator
from src.engine.measure import SupportedMeasure
from src.engine.normalize import check_feasibility, solve_normalization
from src.engine.risk import RiskField
from src.engine.tilt import f_divergence, primal_value, tilt_measure
from src.models.solver import SolveConfig
from tests.conftest import KL_BETA


def test_kl_tilt_is_softmax(two_atoms, zero_one_field):
    tilted = tilt_measure(builtin_generator("kl"), two_atoms, zero_one_field, 1.0, KL_BETA)
    np.testing.assert_allclose(tilted.rn_values, [1.462117, 0.537883], atol=1e-5)
    np.testing.assert_allclose(tilted.tilted_weights, [0.731059, 0.268941], atol=1e-5)
    assert tilted.normalization_error < 1e-12


def test_chi_square_tilt(two_atoms, zero_one_field):
    tilted = tilt_measure(builtin_generator("chi_square"), two_atoms, zero_one_field, 1.0, -0.5)
    np.testing.assert_allclose(tilted.rn_values, [1.25, 0.75], rtol=1e-15)


def test_constant_risk_tilt_is_identity(gen, two_atoms):
    c, lam = 0.4, 2.0
    field = RiskField.from_values([c, c])
    tilted = tilt_measure(gen, two_atoms, field, lam, -lam * gen.df_at_one - c)
    np.testing.assert_allclose(tilted.rn_values, [1.0, 1.0], rtol=1e-14)
    assert f_divergence(gen, tilted) == pytest.approx(0.0, abs=1e-14)
    assert primal_value(gen, tilted, field) == pytest.approx(c, abs=1e-14)


def test_kl_divergence_and_primal(two_atoms, zero_one_field):
    gen = builtin_generator("kl")
    tilted = tilt_measure(gen, two_atoms, zero_one_field, 1.0, KL_BETA)
    assert f_divergence(gen, tilted) == pytest.approx(0.110942, abs=1e-5)
    assert primal_value(gen, tilted, zero_one_field) == pytest.approx(0.379885, abs=1e-5)


def test_chi_square_divergence_and_primal(two_atoms, zero_one_field):
    gen = builtin_generator("chi_square")
    tilted = tilt_measure(gen, two_atoms, zero_one_field, 1.0, -0.5)
    assert f_divergence(gen, tilted) == pytest.approx(0.0625, abs=1e-12)
    assert primal_value(gen, tilted, zero_one_field) == pytest.approx(0.4375, abs=1e-10)


def test_infeasible_beta_names_the_model(two_atoms, zero_one_field):
    with pytest.raises(InfeasibleBetaError) as excinfo:
        tilt_measure(builtin_generator("chi_square"), two_atoms, zero_one_field, 0.2, -0.5)
    assert excinfo.value.theta == [1.0]
    assert excinfo.value.t == pytest.approx(-2.5)
    assert not excinfo.value.beta_too_small


def test_beta_below_domain_asks_for_a_larger_beta(two_atoms, zero_one_field):
    with pytest.raises(InfeasibleBetaError) as excinfo:
        tilt_measure(builtin_generator("reverse_kl"), two_atoms, zero_one_field, 1.0, -0.5)
    assert excinfo.value.beta_too_small


def test_lambda_must_be_positive(two_atoms, zero_one_field):
    with pytest.raises(ConfigurationError):
        tilt_measure(builtin_generator("kl"), two_atoms, zero_one_field, 0.0, 0.0)


def test_tilt_contracts_toward_reference_as_lambda_grows(gen):
    mu = SupportedMeasure.discrete([[0.0], [1.0], [2.0]], [0.2, 0.3, 0.5])
    field = RiskField.from_values([0.0, 0.4, 1.0])
    spread = []
    for lam in (10.0, 100.0, 1000.0):
        beta = solve_normalization(gen, mu, field, lam).beta
        rn = tilt_measure(gen, mu, field, lam, beta).rn_values
        spread.append(np.max(np.abs(rn - 1.0)))
    assert spread[0] > spread[1] > spread[2]


def test_read_model_serializes_lambda(two_atoms, zero_one_field):
    tilted = tilt_measure(builtin_generator("chi_square"), two_atoms, zero_one_field, 1.0, -0.5)
    payload = tilted.to_read().model_dump(by_alias=True)
    assert payload["lambda"] == 1.0
    assert payload["tilted_weights"] == [0.625, 0.375]


def test_underflowed_kl_density_is_positive_not_infeasible(two_atoms, zero_one_field):
    gen, lam = builtin_generator("kl"), 1e-3
    assert check_feasibility(gen, two_atoms, zero_one_field, lam, 0.0)
    assert check_feasibility(gen, two_atoms, zero_one_field, lam, -50.0)

    beta = solve_normalization(gen, two_atoms, zero_one_field, lam).beta
    assert beta == pytest.approx(lam * (math.log(0.5) - 1.0), abs=1e-12)
    tilted = tilt_measure(gen, two_atoms, zero_one_field, lam, beta)
    assert tilted.rn_values[1] == 0.0
    assert tilted.rn_values[0] == pytest.approx(2.0, rel=1e-9)
    assert tilted.normalization_error <= 1e-10

    inst = Instance(gen, two_atoms, zero_one_field)
    assert solve_row(inst, lam, SolveConfig()).feasible
    row, report = certify_row(inst, lam, SolveConfig())
    assert row.feasible
    assert row.failure_reason is None
    assert report.certified
    assert abs(row.gap) <= 1e-8


def test_overflowing_density_asks_for_a_larger_beta(two_atoms, zero_one_field):
    with pytest.raises(InfeasibleBetaError) as excinfo:
        tilt_measure(builtin_generator("kl"), two_atoms, zero_one_field, 1.0, -1000.0)
    assert excinfo.value.beta_too_small


def objective(gen, q, risks, lam, p):
    """R(P) + lambda D_f(P || Q) for rows of candidate weight vectors ``p``."""
    p = np.atleast_2d(p)
    return p @ risks + lam * np.sum(q * gen.f(p / q), axis=1)


def brute_force_minimum(gen, q, risks, lam):
    """Dense simplex grid at step 1e-3, then local grids down to step 1e-6."""
    axis = np.arange(1, 1000) * 1e-3
    p1, p2 = (a.ravel() for a in np.meshgrid(axis, axis))
    keep = 1.0 - p1 - p2 >= 1e-3 - 1e-12
    candidates = np.column_stack([p1[keep], p2[keep], 1.0 - p1[keep] - p2[keep]])
    best = candidates[np.argmin(objective(gen, q, risks, lam, candidates))]
    for step in (1e-4, 1e-5, 1e-6):
        offsets = np.arange(-20, 21) * step
        d1, d2 = (a.ravel() for a in np.meshgrid(offsets, offsets))
        for _ in range(50):
            local = np.column_stack([best[0] + d1, best[1] + d2, best[2] - d1 - d2])
            local = local[np.all(local > 0, axis=1)]
            moved = local[np.argmin(objective(gen, q, risks, lam, local))]
            if np.array_equal(moved, best):
                break
            best = moved
    return best, float(objective(gen, q, risks, lam, best)[0])


@pytest.mark.parametrize("name", GENERATOR_NAMES)
def test_solution_matches_brute_force_on_three_atoms(name):
    gen = builtin_generator(name)
    rng = np.random.default_rng(59)
    for _ in range(3):
        q = rng.uniform(0.2, 1.0, size=3)
        q /= q.sum()
        risks = rng.uniform(0.0, 1.0, size=3)
        risks[rng.integers(3)] = 0.0
        lam = float(rng.uniform(1.0, 3.0))
        mu = SupportedMeasure(np.arange(3.0)[:, None], q)
        field = RiskField.from_values(risks)

        beta = solve_normalization(gen, mu, field, lam).beta
        tilted = tilt_measure(gen, mu, field, lam, beta)
        argmin, minimum = brute_force_minimum(gen, mu.weights, risks, lam)
        assert primal_value(gen, tilted, field) == pytest.approx(minimum, abs=1e-6)
        np.testing.assert_allclose(tilted.tilted_weights, argmin, atol=1e-3)


def test_random_perturbations_never_improve_the_solution(gen, instances):
    rng = np.random.default_rng(61)
    for inst in instances(gen.name, 10, seed=61):
        beta = solve_normalization(inst.gen, inst.mu, inst.field, inst.lambda_).beta
        weights = tilt_measure(inst.gen, inst.mu, inst.field, inst.lambda_, beta).tilted_weights
        weights = weights / weights.sum()
        q, risks = inst.mu.weights, inst.field.values
        best = objective(gen, q, risks, inst.lambda_, weights)[0]
        scales = rng.choice([1e-3, 1e-2, 1e-1, 1.0], size=(100, 1))
        perturbed = weights * np.exp(scales * rng.normal(size=(100, weights.size)))
        perturbed /= perturbed.sum(axis=1, keepdims=True)
        assert np.all(objective(gen, q, risks, inst.lambda_, perturbed) >= best - 1e-9)
