import json
import logging
import time
from typing import Callable

import click
from pydantic import ValidationError

from .commands import register_commands
from .core.config import get_settings
from .core.errors import (
    ConfigurationError,
    DegenerateInstanceError,
    DriftError,
    ErmFdrError,
    InfeasibleLambdaError,
    NoConvergenceError,
)

logging.basicConfig(
    level=get_settings().log_level.upper(),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)
logger = logging.getLogger(__name__)

ExceptionHandler = Callable[[Exception], int]
_handlers: dict[type[Exception], ExceptionHandler] = {}


def exception_handler(exc_class: type[Exception]):
    """Register the exit status for an exception class (most derived class wins)."""

    def decorator(fn: ExceptionHandler) -> ExceptionHandler:
        _handlers[exc_class] = fn
        return fn

    return decorator


def _report(exc: Exception) -> None:
    click.echo(json.dumps({"error": type(exc).__name__, "detail": str(exc)}), err=True)


@exception_handler(ConfigurationError)
def configuration_error_handler(exc: ConfigurationError) -> int:
    logger.error(f"Invalid configuration: {exc}")
    return 2


@exception_handler(ValidationError)
def validation_error_handler(exc: ValidationError) -> int:
    logger.error(f"Invalid solver options: {exc}")
    return 2


@exception_handler(DegenerateInstanceError)
def degenerate_instance_handler(exc: DegenerateInstanceError) -> int:
    logger.error(f"Degenerate instance: {exc}")
    return 3


@exception_handler(InfeasibleLambdaError)
def infeasible_lambda_handler(exc: InfeasibleLambdaError) -> int:
    logger.error(f"Infeasible regularization factor: {exc}")
    return 4


@exception_handler(NoConvergenceError)
def no_convergence_handler(exc: NoConvergenceError) -> int:
    logger.error(f"Solver did not converge: {exc}")
    return 5


@exception_handler(DriftError)
def drift_handler(exc: DriftError) -> int:
    logger.error(f"Continuation drifted: {exc}")
    return 6


@exception_handler(ErmFdrError)
def generic_error_handler(exc: ErmFdrError) -> int:
    logger.error(f"Run failed: {exc}")
    return 1


def handle_exception(exc: Exception) -> int | None:
    for cls in type(exc).__mro__:
        handler = _handlers.get(cls)
        if handler is not None:
            _report(exc)
            return handler(exc)
    return None


class ErmFdrGroup(click.Group):
    """Maps registered exceptions to exit codes and logs wall time per run."""

    def invoke(self, ctx: click.Context):
        start_time = time.time()
        try:
            return super().invoke(ctx)
        except Exception as exc:
            code = handle_exception(exc)
            if code is None:
                raise
            ctx.exit(code)
        finally:
            process_time = time.time() - start_time
            logger.info(f"Run: {ctx.invoked_subcommand or '-'} - {process_time * 1000:.1f}ms")


@click.group(cls=ErmFdrGroup)
@click.version_option(package_name="ermfdr")
def cli():
    """ERM with f-divergence regularization: normalization, duality and continuation."""


register_commands(cli)


if __name__ == "__main__":
    cli()
