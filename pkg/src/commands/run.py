import logging
from typing import Optional

import click

from ..core.config import get_settings
from ..engine.experiment import load_experiment, run_experiment
from ..models.solver import SolveConfig

logger = logging.getLogger(__name__)

LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR"]


def make_run_command(name: str, mode: str, help_text: str) -> click.Command:
    """A subcommand that runs an experiment file in ``mode``."""

    @click.command(name=name, help=help_text)
    @click.option(
        "--config",
        "config_path",
        required=True,
        type=click.Path(dir_okay=False),
        help="JSON experiment file.",
    )
    @click.option("--out", "out_dir", type=click.Path(file_okay=False), help="Output directory.")
    @click.option("--epsilon", type=float, help="Normalization tolerance.")
    @click.option("--max-iters", type=int, help="Bisection iteration cap.")
    @click.option("--seed", type=int, help="Seed for sampled reference measures.")
    @click.option("--workers", type=int, help="Concurrent solves across the lambda grid.")
    @click.option("--log-level", type=click.Choice(LOG_LEVELS, case_sensitive=False))
    def command(
        config_path: str,
        out_dir: Optional[str],
        epsilon: Optional[float],
        max_iters: Optional[int],
        seed: Optional[int],
        workers: Optional[int],
        log_level: Optional[str],
    ):
        if log_level:
            logging.getLogger().setLevel(log_level.upper())
        settings = get_settings()
        config = load_experiment(config_path).model_copy(update={"mode": mode})
        overrides = config.solver.model_dump(exclude_none=True)
        overrides.update(
            {k: v for k, v in {"epsilon": epsilon, "max_iters": max_iters}.items() if v is not None}
        )
        cfg = SolveConfig.from_settings(settings, **overrides)
        target = out_dir or config.output.directory or settings.output_dir
        result = run_experiment(
            config,
            cfg,
            out_dir=target,
            workers=workers or settings.workers,
            seed=seed,
        )

        summary = result.summary
        if summary.lambda_star is not None:
            estimate = summary.lambda_star
            bound = " (upper bound)" if estimate.at_lower_bound else ""
            click.echo(f"lambda* = {estimate.value:.6g}{bound} after {estimate.probes} probes")
        if summary.path is not None:
            click.echo(
                f"path: {len(summary.path.lambdas)} nodes, max rel err "
                f"{summary.path.max_rel_err:.3e}, {summary.path.monotone}"
            )
        click.echo(
            f"{summary.rows - summary.infeasible}/{summary.rows} lambdas solved; "
            f"artifacts in {target}"
        )

    return command
