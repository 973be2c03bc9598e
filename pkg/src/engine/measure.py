"""Finitely supported reference measures and the expectation engine.

Every integral against Q reduces to a weighted sum over support points.
Continuous references enter only through deterministic discretization.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence, Union

import numpy as np
from scipy import stats

from ..core.errors import (
    AlignmentError,
    ConfigurationError,
    EmptySupportError,
    IntegrandDomainError,
)

logger = logging.getLogger(__name__)

WEIGHT_SUM_TOLERANCE = 1e-12

Integrand = Union[Callable[[np.ndarray], float], Sequence[float], np.ndarray]


@dataclass(frozen=True)
class Provenance:
    kind: Literal["discrete", "quadrature", "sample"]
    detail: str = ""


@dataclass(frozen=True, eq=False)
class SupportedMeasure:
    points: np.ndarray
    weights: np.ndarray
    provenance: Provenance = field(default=Provenance("discrete"))

    def __post_init__(self):
        points = np.array(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        weights = np.array(self.weights, dtype=float)
        if points.ndim != 2 or points.shape[0] == 0:
            raise EmptySupportError("a measure needs at least one support point")
        if weights.shape != (points.shape[0],):
            raise AlignmentError(
                f"{points.shape[0]} support points but {weights.size} weights"
            )
        if not np.all(np.isfinite(points)):
            raise ConfigurationError("support points must be finite")
        if not np.all(weights > 0):
            raise ConfigurationError("all weights must be strictly positive")
        if abs(weights.sum() - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise ConfigurationError(f"weights sum to {weights.sum()!r}, not 1")
        if np.unique(points, axis=0).shape[0] != points.shape[0]:
            raise ConfigurationError("support points must be pairwise distinct")
        points.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def discrete(cls, points, weights=None) -> "SupportedMeasure":
        """Atoms at ``points`` with masses proportional to ``weights`` (uniform if omitted)."""
        points = np.asarray(points, dtype=float)
        n = points.shape[0]
        raw = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
        if np.any(raw <= 0):
            raise ConfigurationError("atom masses must be strictly positive")
        return cls(points, raw / raw.sum(), Provenance("discrete"))

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.points.tobytes())
        h.update(self.weights.tobytes())
        return h.hexdigest()

    def reweighted(self, weights: np.ndarray) -> "SupportedMeasure":
        """Same support, new (positive, normalized) weights."""
        weights = np.asarray(weights, dtype=float)
        return SupportedMeasure(self.points, weights / weights.sum(), self.provenance)

    def ess_inf(self, values: np.ndarray) -> float:
        return float(np.min(self.align(values)))

    def align(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape != (self.size,):
            raise AlignmentError(
                f"expected {self.size} values aligned with the support, got shape {values.shape}"
            )
        return values


def expectation(mu: SupportedMeasure, g: Integrand) -> float:
    """Return sum_i w_i g(theta_i).

    ``g`` is either a callable on support points or a vector already
    evaluated on them. numpy's pairwise summation keeps the reduction order
    fixed, so results are bit-stable across runs.
    """
    if callable(g):
        values = np.array([g(theta) for theta in mu.points], dtype=float)
    else:
        values = mu.align(g)
    bad = ~np.isfinite(values)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise IntegrandDomainError(mu.points[i].tolist(), float(values[i]))
    return float(np.sum(mu.weights * values))


@dataclass(frozen=True)
class QuadratureGrid:
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ConfigurationError("a quadrature grid needs at least 2 nodes")
        if np.any(np.diff(nodes) <= 0):
            raise ConfigurationError("quadrature nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, low: float, high: float, nodes: int) -> "QuadratureGrid":
        if not high > low:
            raise ConfigurationError(f"empty grid interval [{low}, {high}]")
        return cls(np.linspace(low, high, nodes))

    @property
    def cell_sizes(self) -> np.ndarray:
        # Midpoint cells; uniform grids give the spacing at every node.
        return np.gradient(self.nodes)

    def describe(self) -> str:
        return f"grid[{self.nodes[0]}, {self.nodes[-1]}; {self.nodes.size}]"


def discretize_density(
    density: Callable[[np.ndarray], np.ndarray], grid: QuadratureGrid
) -> SupportedMeasure:
    """Weights proportional to density(node) * cell size, renormalized to one.

    Nodes where the density vanishes carry no mass and are dropped.
    """
    values = np.asarray(density(grid.nodes), dtype=float)
    if values.shape != grid.nodes.shape or not np.all(np.isfinite(values)):
        raise ConfigurationError("density must return finite values on every node")
    if np.any(values < 0):
        raise ConfigurationError("density must be nonnegative on the grid")
    mass = values * grid.cell_sizes
    keep = mass > 0
    if not np.any(keep):
        raise EmptySupportError(f"density vanishes on {grid.describe()}")
    if not np.all(keep):
        logger.info(f"Dropping {int((~keep).sum())} zero-density nodes from {grid.describe()}")
    return SupportedMeasure(
        grid.nodes[keep],
        mass[keep] / mass[keep].sum(),
        Provenance("quadrature", grid.describe()),
    )


DensityName = Literal["gaussian", "laplace", "uniform"]


def builtin_distribution(name: str, loc: float = 0.0, scale: float = 1.0):
    """Frozen scipy distribution for a named built-in reference density."""
    if scale <= 0:
        raise ConfigurationError("scale must be positive")
    if name == "gaussian":
        return stats.norm(loc=loc, scale=scale)
    if name == "laplace":
        return stats.laplace(loc=loc, scale=scale)
    if name == "uniform":
        return stats.uniform(loc=loc, scale=scale)
    raise ConfigurationError(
        f"Unknown density '{name}'. Expected one of: gaussian, laplace, uniform"
    )


def sample_measure(
    name: str, n: int, seed: int, loc: float = 0.0, scale: float = 1.0
) -> SupportedMeasure:
    """Empirical measure of ``n`` seeded draws; repeated draws merge into one atom."""
    if n < 1:
        raise ConfigurationError("sample size must be at least 1")
    rng = np.random.default_rng(seed)
    draws = builtin_distribution(name, loc, scale).rvs(size=n, random_state=rng)
    atoms, counts = np.unique(draws, return_counts=True)
    return SupportedMeasure(
        atoms, counts / counts.sum(), Provenance("sample", f"seed={seed}, n={n}")
    )
