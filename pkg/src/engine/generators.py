"""Convex generators of f-divergences and their Legendre-Fenchel conjugates.

Every map in an :class:`FGenerator` is vectorized over numpy arrays and
restricted to an explicit :class:`Interval`; evaluating outside it raises
instead of returning ``inf`` or ``nan``.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Literal, get_args

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import xlogy

from ..core.errors import (
    ConfigurationError,
    GeneratorDomainError,
    InfiniteConjugateError,
    UnboundedConjugateError,
)

logger = logging.getLogger(__name__)

GeneratorName = Literal["kl", "reverse_kl", "chi_square", "squared_hellinger"]
GENERATOR_NAMES: tuple[str, ...] = get_args(GeneratorName)

# Extended-real sentinel for f'(0) when the limit diverges.
NEG_INF = -math.inf

ArrayMap = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Interval:
    low: float = -math.inf
    high: float = math.inf
    low_closed: bool = False
    high_closed: bool = False

    def contains(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        above = values >= self.low if self.low_closed else values > self.low
        below = values <= self.high if self.high_closed else values < self.high
        return above & below

    def __str__(self) -> str:
        left = "[" if self.low_closed else "("
        right = "]" if self.high_closed else ")"
        return f"{left}{self.low}, {self.high}{right}"


def _restrict(
    generator: str,
    function: str,
    fn: ArrayMap,
    domain: Interval,
    error: type[GeneratorDomainError] = GeneratorDomainError,
) -> Callable:
    def evaluate(values):
        arr = np.asarray(values, dtype=float)
        inside = domain.contains(arr)
        if not np.all(inside):
            offending = arr[~inside].flat[0] if arr.ndim else arr
            raise error(generator, function, float(offending))
        out = fn(arr)
        return float(out) if np.ndim(out) == 0 else out

    evaluate.__name__ = f"{generator}_{function}"
    return evaluate


@dataclass(frozen=True)
class FGenerator:
    """A strictly convex generator f with f(1) = 0 and its companion maps.

    ``df_inv_domain`` is the range of f' over (0, inf), i.e. the set of t for
    which f'^-1(t) exists and is positive. ``conjugate_derivative`` equals
    ``df_inv`` on that set and extends it to the rest of J.
    """

    name: str
    f: Callable
    df: Callable
    df_inv: Callable
    d2f: Callable
    conjugate: Callable
    conjugate_derivative: Callable
    df_at_zero: float
    conjugate_domain: Interval
    df_inv_domain: Interval
    f_domain: Interval = field(default=Interval(0.0, math.inf, low_closed=True))

    @property
    def has_finite_df_at_zero(self) -> bool:
        return math.isfinite(self.df_at_zero)

    @property
    def df_at_one(self) -> float:
        return self.df(1.0)


def _build(
    name: str,
    *,
    f: ArrayMap,
    df: ArrayMap,
    df_inv: ArrayMap,
    d2f: ArrayMap,
    conjugate: ArrayMap,
    conjugate_derivative: ArrayMap,
    df_at_zero: float,
    f_domain: Interval,
    df_inv_domain: Interval,
    conjugate_domain: Interval,
) -> FGenerator:
    positive = Interval(0.0, math.inf)
    return FGenerator(
        name=name,
        f=_restrict(name, "f", f, f_domain),
        df=_restrict(name, "df", df, positive),
        df_inv=_restrict(name, "df_inv", df_inv, df_inv_domain),
        d2f=_restrict(name, "d2f", d2f, positive),
        conjugate=_restrict(
            name, "conjugate", conjugate, conjugate_domain, InfiniteConjugateError
        ),
        conjugate_derivative=_restrict(
            name,
            "conjugate_derivative",
            conjugate_derivative,
            conjugate_domain,
            InfiniteConjugateError,
        ),
        df_at_zero=df_at_zero,
        conjugate_domain=conjugate_domain,
        df_inv_domain=df_inv_domain,
        f_domain=f_domain,
    )


def _kl() -> FGenerator:
    everywhere = Interval()
    return _build(
        "kl",
        f=lambda x: xlogy(x, x),
        df=lambda x: np.log(x) + 1.0,
        df_inv=lambda t: np.exp(t - 1.0),
        d2f=lambda x: 1.0 / x,
        conjugate=lambda t: np.exp(t - 1.0),
        conjugate_derivative=lambda t: np.exp(t - 1.0),
        df_at_zero=NEG_INF,
        f_domain=Interval(0.0, math.inf, low_closed=True),
        df_inv_domain=everywhere,
        conjugate_domain=everywhere,
    )


def _reverse_kl() -> FGenerator:
    negatives = Interval(-math.inf, 0.0)
    return _build(
        "reverse_kl",
        f=lambda x: -np.log(x),
        df=lambda x: -1.0 / x,
        df_inv=lambda t: -1.0 / t,
        d2f=lambda x: 1.0 / x**2,
        conjugate=lambda t: -1.0 - np.log(-t),
        conjugate_derivative=lambda t: -1.0 / t,
        df_at_zero=NEG_INF,
        f_domain=Interval(0.0, math.inf),
        df_inv_domain=negatives,
        conjugate_domain=negatives,
    )


def _chi_square() -> FGenerator:
    # The supremum defining f* sits at x = 0 once t <= -2, so f* is flat there.
    return _build(
        "chi_square",
        f=lambda x: (x - 1.0) ** 2,
        df=lambda x: 2.0 * (x - 1.0),
        df_inv=lambda t: 1.0 + t / 2.0,
        d2f=lambda x: np.full_like(x, 2.0, dtype=float),
        conjugate=lambda t: np.where(t >= -2.0, t + t**2 / 4.0, -1.0),
        conjugate_derivative=lambda t: np.maximum(0.0, 1.0 + t / 2.0),
        df_at_zero=-2.0,
        f_domain=Interval(0.0, math.inf, low_closed=True),
        df_inv_domain=Interval(-2.0, math.inf),
        conjugate_domain=Interval(),
    )


def _squared_hellinger() -> FGenerator:
    below_one = Interval(-math.inf, 1.0)
    return _build(
        "squared_hellinger",
        f=lambda x: (1.0 - np.sqrt(x)) ** 2,
        df=lambda x: 1.0 - 1.0 / np.sqrt(x),
        df_inv=lambda t: (1.0 - t) ** -2,
        d2f=lambda x: 0.5 * x**-1.5,
        conjugate=lambda t: t / (1.0 - t),
        conjugate_derivative=lambda t: (1.0 - t) ** -2,
        df_at_zero=NEG_INF,
        f_domain=Interval(0.0, math.inf, low_closed=True),
        df_inv_domain=below_one,
        conjugate_domain=below_one,
    )


_BUILTINS: dict[str, Callable[[], FGenerator]] = {
    "kl": _kl,
    "reverse_kl": _reverse_kl,
    "chi_square": _chi_square,
    "squared_hellinger": _squared_hellinger,
}


def builtin_generator(name: str) -> FGenerator:
    """Return the built-in generator bundle registered under ``name``."""
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise ConfigurationError(
            f"Unknown generator '{name}'. Expected one of: {', '.join(GENERATOR_NAMES)}"
        ) from None
    return factory()


@dataclass(frozen=True)
class SearchGrid:
    """Uniform grid on [0, upper] used by :func:`conjugate_by_search`."""

    upper: float = 100.0
    nodes: int = 1_000_001
    max_widenings: int = 6
    widen_factor: float = 10.0

    def points(self, upper: float) -> np.ndarray:
        return np.linspace(0.0, upper, self.nodes)


def conjugate_by_search(gen: FGenerator, t: float, grid: SearchGrid | None = None) -> float:
    """Evaluate sup_x {t x - f(x)} by brute force over a grid.

    The grid is widened while the maximizer sits on its upper edge; the best
    node is then polished with a bounded scalar search between its neighbours.
    """
    grid = grid or SearchGrid()
    upper = grid.upper
    for widening in range(grid.max_widenings + 1):
        xs = grid.points(upper)
        if not gen.f_domain.contains(0.0):
            xs = xs[1:]
        objective = t * xs - gen.f(xs)
        best = int(np.argmax(objective))
        if best < len(xs) - 1:
            lo = xs[max(best - 1, 0)]
            hi = xs[best + 1]
            polished = minimize_scalar(
                lambda x: -(t * x - gen.f(x)),
                bounds=(lo, hi),
                method="bounded",
                options={"xatol": 1e-14},
            )
            value = max(float(objective[best]), -float(polished.fun))
            logger.debug(
                f"conjugate_by_search({gen.name}, t={t}): argmax~{xs[best]:.6g} "
                f"after {widening} widenings"
            )
            return value
        upper *= grid.widen_factor
    raise UnboundedConjugateError(gen.name, "conjugate", float(t))
