import math
from dataclasses import dataclass

import numpy as np
import pytest

from src.engine.generators import GENERATOR_NAMES, FGenerator, builtin_generator
from src.engine.measure import SupportedMeasure
from src.engine.risk import RiskField
from src.models.solver import SolveConfig

KL_BETA = math.log(0.5 * (1.0 + math.exp(-1.0))) - 1.0


@dataclass
class Instance:
    gen: FGenerator
    mu: SupportedMeasure
    field: RiskField
    lambda_: float


@pytest.fixture
def two_atoms() -> SupportedMeasure:
    return SupportedMeasure.discrete([[0.0], [1.0]])


@pytest.fixture
def zero_one_field() -> RiskField:
    return RiskField.from_values([0.0, 1.0])


@pytest.fixture
def cfg() -> SolveConfig:
    return SolveConfig()


@pytest.fixture(params=GENERATOR_NAMES)
def gen(request) -> FGenerator:
    return builtin_generator(request.param)


def random_instance(rng: np.random.Generator, name: str) -> Instance:
    """2-50 atoms, Dirichlet weights, risks in [0, 1], lambda in [1, 10].

    Every built-in generator is feasible there: chi_square needs lambda > 1/2.
    """
    m = int(rng.integers(2, 51))
    mu = SupportedMeasure.discrete(np.arange(m, dtype=float)[:, None], rng.dirichlet(np.ones(m)))
    values = rng.uniform(0.0, 1.0, size=m)
    values[rng.integers(m)] = 0.0
    field = RiskField.from_values(values)
    return Instance(builtin_generator(name), mu, field, float(rng.uniform(1.0, 10.0)))


@pytest.fixture
def instances():
    def make(name: str, count: int, seed: int = 0) -> list[Instance]:
        rng = np.random.default_rng(seed)
        return [random_instance(rng, name) for _ in range(count)]

    return make
