"""Subcommands of the ``ermfdr`` command line."""

import logging

import click

from .generators import generators
from .run import make_run_command

logger = logging.getLogger(__name__)

RUN_MODES = {
    "solve": ("solve", "Solve for N(lambda) on every lambda of the grid."),
    "certify": ("certify", "Solve primal and dual independently and report the duality gap."),
    "path": ("path", "Integrate N along the grid and compare with direct root-finding."),
    "lambda-star": ("lambda_star", "Estimate the left end of the feasible lambda interval."),
}


def register_commands(group: click.Group) -> None:
    """Attach the run subcommands and the generator listing to ``group``."""
    for name, (mode, help_text) in RUN_MODES.items():
        group.add_command(make_run_command(name, mode, help_text))
    group.add_command(generators)
    logger.debug(f"Registered commands: {', '.join(sorted(group.commands))}")
