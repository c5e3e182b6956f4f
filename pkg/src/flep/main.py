#!/usr/bin/env python3

"""This script is the entry point of flep.
flep computes ground states of the mass-critical fractional NLS equation, minimizers of the constrained energy below the threshold a*, and checks their blow-up as a approaches a*.
"""

import typer
from commands.command_utils import CommandRegistry
from constants import __version__
from print import Printer
from utils import setup_logging

app = typer.Typer(add_completion=False)

registry = CommandRegistry()
command_list = registry.search_commands()
registry.register_commands(app, command_list)

printer = Printer()


def version_callback(value: bool) -> None:
    if value:
        typer.echo(f"flep {__version__}")
        raise typer.Exit()


# app entry point of typer main app
@app.callback(
    invoke_without_command=True,
    epilog=printer.epilog(),
    no_args_is_help=False,
    help=(
        "Fractional NLS ground states and blow-up of constrained"
        " minimizers.\n\nSolve for the ground state and the threshold a*,"
        " minimize the energy at a coupling a, and sweep a towards a* to fit"
        " the blow-up laws."
    ),
    context_settings={
        "help_option_names": ["-h", "--help"],
    },
)
def main(
    ctx: typer.Context,
    verbose: bool = typer.Option(
        False, "--verbose", "-v", help="Log solver iterations."
    ),
    quiet: bool = typer.Option(
        False, "--quiet", "-q", help="Only print errors."
    ),
    version: bool = typer.Option(
        False,
        "--version",
        callback=version_callback,
        is_eager=True,
        help="Print the version and exit.",
    ),
) -> None:
    """
    Typer app entry point.
    Set up logging, then print title, subtitle or help, depending on context.
    """
    setup_logging(verbose=verbose, quiet=quiet)
    ctx.obj = {"quiet": quiet}

    for command in app.registered_groups:
        if ctx.invoked_subcommand == command.name and not quiet:
            printer.subtitle(command.name)

    if ctx.invoked_subcommand is None:
        printer.title()
        typer.echo(ctx.get_help())


if __name__ == "__main__":
    app()
