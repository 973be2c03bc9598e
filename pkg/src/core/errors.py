"""Exception hierarchy shared by the engine and the command line."""

from typing import Any


class ErmFdrError(Exception):
    """Base class for every error raised by the solver stack."""


class ConfigurationError(ErmFdrError):
    """Unknown names, invalid grids or malformed experiment files."""


class GeneratorDomainError(ErmFdrError):
    """A generator map was evaluated outside its domain."""

    def __init__(self, generator: str, function: str, value: float):
        self.generator = generator
        self.function = function
        self.value = value
        super().__init__(
            f"{generator}.{function} is undefined at {value!r}"
        )


class InfiniteConjugateError(GeneratorDomainError):
    """The conjugate is +inf at the requested point (t outside J)."""


class UnboundedConjugateError(GeneratorDomainError):
    """Grid search kept finding its maximizer on the upper boundary."""


class GeneratorContractError(ErmFdrError):
    """A generator broke one of its invariants (e.g. f'' <= 0)."""


class IntegrandDomainError(ErmFdrError):
    """An integrand produced a non-finite value at a support point."""

    def __init__(self, theta: Any, value: float):
        self.theta = theta
        self.value = value
        super().__init__(f"integrand is not finite at theta={theta!r} (value={value!r})")


class EmptySupportError(ErmFdrError):
    """A density vanished on every node of a grid."""


class AlignmentError(ErmFdrError):
    """Vectors meant to share a support have different lengths."""


class InfeasibleBetaError(ErmFdrError):
    """The tilt argument -(beta + L)/lambda left the domain of the inverse derivative.

    ``beta_too_small`` is True when t exceeded the upper end of the domain, so a
    larger beta moves back towards feasibility.
    """

    def __init__(self, theta: Any, t: float, beta: float, beta_too_small: bool):
        self.theta = theta
        self.t = t
        self.beta = beta
        self.beta_too_small = beta_too_small
        super().__init__(
            f"beta={beta!r} is infeasible: t={t!r} at theta={theta!r} "
            f"({'raise' if beta_too_small else 'lower'} beta)"
        )


class DegenerateInstanceError(ErmFdrError):
    """The empirical risk is constant on the support; the solution is Q itself."""


class InfeasibleLambdaError(ErmFdrError):
    """No normalizing beta exists for this regularization factor."""

    def __init__(self, message: str, lambda_: float | None = None):
        self.lambda_ = lambda_
        super().__init__(message)


class NoConvergenceError(ErmFdrError):
    def __init__(self, message: str, bracket: tuple[float, float], iterations: int):
        self.bracket = bracket
        self.iterations = iterations
        super().__init__(f"{message} (bracket={bracket}, iterations={iterations})")


class DriftError(ErmFdrError):
    """The integrated path drifted away from direct root-finding."""

    def __init__(self, max_rel_err: float, ceiling: float, path: Any = None):
        self.max_rel_err = max_rel_err
        self.ceiling = ceiling
        self.path = path
        super().__init__(
            f"ODE path deviates from root-finding by {max_rel_err:.3e} (ceiling {ceiling:.3e})"
        )
