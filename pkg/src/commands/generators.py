import click

from ..engine.generators import GENERATOR_NAMES, builtin_generator


@click.command()
def generators():
    """List built-in generators with f'(0) and the conjugate domain J."""
    for name in GENERATOR_NAMES:
        gen = builtin_generator(name)
        click.echo(f"{name}\tf'(0)={gen.df_at_zero}\tJ={gen.conjugate_domain}")
