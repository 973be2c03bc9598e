"""Empirical risk on the support of a reference measure.

The loss is evaluated once per (dataset, measure) pair; every solver
downstream consumes the resulting :class:`RiskField` vector.
"""

import hashlib
import logging
from dataclasses import dataclass, replace
from typing import Callable, Literal

import numpy as np
from cachetools import LRUCache, cached

from ..core.errors import AlignmentError, ConfigurationError, IntegrandDomainError
from .measure import SupportedMeasure

logger = logging.getLogger(__name__)

# predict(thetas (m, d), patterns (n, p)) -> predictions (m, n)
ModelRule = Callable[[np.ndarray, np.ndarray], np.ndarray]
# loss(predictions (m, n), labels (n,)) -> nonnegative losses (m, n)
Loss = Callable[[np.ndarray, np.ndarray], np.ndarray]

ModelRuleName = Literal["affine", "linear"]
LossName = Literal["squared_error", "absolute_error", "zero_one"]


@dataclass(frozen=True, eq=False)
class Dataset:
    patterns: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        patterns = np.array(self.patterns, dtype=float)
        if patterns.ndim == 1:
            patterns = patterns[:, None]
        labels = np.array(self.labels, dtype=float).reshape(-1)
        if labels.size < 1:
            raise ConfigurationError("a dataset needs at least one labelled pattern")
        if patterns.shape[0] != labels.size:
            raise AlignmentError(f"{patterns.shape[0]} patterns but {labels.size} labels")
        if not (np.all(np.isfinite(patterns)) and np.all(np.isfinite(labels))):
            raise ConfigurationError("patterns and labels must be finite")
        patterns.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "patterns", patterns)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_pairs(cls, pairs) -> "Dataset":
        """Build from ``[[x, y], ...]`` where ``x`` is a scalar or a list."""
        if not pairs:
            raise ConfigurationError("a dataset needs at least one labelled pattern")
        patterns = [np.atleast_1d(np.asarray(x, dtype=float)) for x, _ in pairs]
        labels = [float(y) for _, y in pairs]
        return cls(np.vstack(patterns), np.asarray(labels))

    @property
    def n(self) -> int:
        return self.labels.size

    @property
    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.patterns.tobytes())
        h.update(self.labels.tobytes())
        return h.hexdigest()


@dataclass(frozen=True, eq=False)
class RiskField:
    """L_z evaluated on the support of a measure, with delta* and the separability flag."""

    values: np.ndarray
    delta_star: float
    separable: bool
    source: str = "raw"

    @classmethod
    def from_values(cls, values, source: str = "raw") -> "RiskField":
        values = np.array(values, dtype=float).reshape(-1)
        if values.size == 0:
            raise ConfigurationError("risk vector is empty")
        if not np.all(np.isfinite(values)):
            i = int(np.argmax(~np.isfinite(values)))
            raise IntegrandDomainError(i, float(values[i]))
        if np.any(values < 0):
            raise ConfigurationError("empirical risk must be nonnegative")
        values.setflags(write=False)
        separable = bool(np.ptp(values) > 0)
        if not separable:
            logger.warning(
                f"Empirical risk is constant ({values[0]!r}) on the support; "
                "solvers will refuse this field"
            )
        return cls(values, float(values.min()), separable, source)

    @classmethod
    def on_measure(cls, values, mu: SupportedMeasure, source: str = "raw") -> "RiskField":
        """Risk aligned with the support of ``mu``; delta* is its essential infimum under ``mu``."""
        field = cls.from_values(mu.align(np.ravel(values)), source)
        return replace(field, delta_star=mu.ess_inf(field.values))

    @property
    def max_value(self) -> float:
        return float(self.values.max())

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.values.tobytes()).hexdigest()

    def aligned_with(self, mu: SupportedMeasure) -> np.ndarray:
        if self.values.size != mu.size:
            raise AlignmentError(
                f"risk field has {self.values.size} values, measure has {mu.size} atoms"
            )
        return self.values


def affine_rule(thetas: np.ndarray, patterns: np.ndarray) -> np.ndarray:
    """h(theta, x) = theta^T (x, 1); theta has one more coordinate than x."""
    p = patterns.shape[1]
    if thetas.shape[1] != p + 1:
        raise ConfigurationError(
            f"affine models need dimension {p + 1}, support has dimension {thetas.shape[1]}"
        )
    return thetas[:, :p] @ patterns.T + thetas[:, p:]


def linear_rule(thetas: np.ndarray, patterns: np.ndarray) -> np.ndarray:
    """h(theta, x) = theta^T x."""
    if thetas.shape[1] != patterns.shape[1]:
        raise ConfigurationError(
            f"linear models need dimension {patterns.shape[1]}, "
            f"support has dimension {thetas.shape[1]}"
        )
    return thetas @ patterns.T


def squared_error(predictions: np.ndarray, labels: np.ndarray) -> np.ndarray:
    return (predictions - labels) ** 2


def absolute_error(predictions: np.ndarray, labels: np.ndarray) -> np.ndarray:
    return np.abs(predictions - labels)


def zero_one_loss(margin: float = 0.0) -> Loss:
    """1{y * y_hat <= margin}; labels are expected in {-1, +1}."""

    def loss(predictions: np.ndarray, labels: np.ndarray) -> np.ndarray:
        return (predictions * labels <= margin).astype(float)

    return loss


MODEL_RULES: dict[str, ModelRule] = {"affine": affine_rule, "linear": linear_rule}


def resolve_loss(name: str, margin: float = 0.0) -> Loss:
    if name == "squared_error":
        return squared_error
    if name == "absolute_error":
        return absolute_error
    if name == "zero_one":
        return zero_one_loss(margin)
    raise ConfigurationError(
        f"Unknown loss '{name}'. Expected one of: squared_error, absolute_error, zero_one"
    )


def resolve_model_rule(name: str) -> ModelRule:
    try:
        return MODEL_RULES[name]
    except KeyError:
        raise ConfigurationError(
            f"Unknown model rule '{name}'. Expected one of: {', '.join(MODEL_RULES)}"
        ) from None


def build_risk_field(
    data: Dataset,
    model_rule: ModelRule,
    loss: Loss,
    mu: SupportedMeasure,
    source: str = "dataset",
) -> RiskField:
    """values[i] = (1/n) sum_j loss(h(theta_i, x_j), y_j)."""
    labels = data.labels
    at_truth = np.asarray(loss(labels[None, :], labels), dtype=float)
    if np.any(at_truth != 0):
        raise ConfigurationError("loss must vanish when the prediction equals the label")
    predictions = np.asarray(model_rule(mu.points, data.patterns), dtype=float)
    if not np.all(np.isfinite(predictions)):
        i = int(np.argmax(~np.all(np.isfinite(predictions), axis=1)))
        raise IntegrandDomainError(mu.points[i].tolist(), float("nan"))
    losses = np.asarray(loss(predictions, labels), dtype=float)
    bad = ~np.all(np.isfinite(losses), axis=1)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise IntegrandDomainError(mu.points[i].tolist(), float("inf"))
    if np.any(losses < 0):
        raise ConfigurationError("loss must be nonnegative")
    logger.debug(f"Risk field built over {mu.size} models and {data.n} samples")
    return RiskField.on_measure(losses.mean(axis=1), mu, source=source)


_field_cache: LRUCache = LRUCache(maxsize=64)


@cached(
    _field_cache,
    key=lambda data, rule, loss, mu, margin=0.0: (
        data.digest,
        mu.digest,
        rule,
        loss,
        margin,
    ),
)
def named_risk_field(
    data: Dataset, rule: str, loss: str, mu: SupportedMeasure, margin: float = 0.0
) -> RiskField:
    """Cached :func:`build_risk_field` for built-in rules and losses."""
    return build_risk_field(
        data,
        resolve_model_rule(rule),
        resolve_loss(loss, margin),
        mu,
        source=f"{rule}/{loss}",
    )


def expected_risk(mu: SupportedMeasure, field: RiskField) -> float:
    """R_z(P) = sum_i w_i L_z(theta_i).

    Accepts anything exposing ``weights`` and ``size`` on the field's support,
    including a tilted solution, whose weights are not renormalized.
    """
    values = field.aligned_with(mu)
    return float(np.sum(mu.weights * values))


def rashomon_mass(mu: SupportedMeasure, field: RiskField, delta: float) -> float:
    """Q-mass of the sublevel set {theta : L_z(theta) <= delta}."""
    values = field.aligned_with(mu)
    return float(np.sum(mu.weights[values <= delta]))
