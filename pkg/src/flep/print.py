"""This file contains a printing class which is used for common terminal prints."""

from typing import Any, Sequence

import pyfiglet
import rich
from rich.console import Console
from rich.style import Style
from rich.table import Table
from rich.text import Text


class Printer:
    """Handles printing functions for common terminal prints"""

    def __init__(self, quiet: bool = False) -> None:
        """
        Initialize the Printer.

        Instantiates a Console object and initializes styles for different types of messages (danger, warning, ok).

        Args:
            quiet --- only print errors.
        """
        self.console = Console()
        self.quiet = quiet
        self.danger_style = Style(color="red", bold=True)
        self.warning_style = Style(color="yellow", bold=True)
        self.ok_style = Style(color="green", bold=True)

    def title(self) -> None:
        """Print flep title."""
        title = pyfiglet.figlet_format("flep", font="big")
        title = Text(title)
        title.stylize("bold magenta")
        rich.print(title)

    def subtitle(self, name: str) -> None:
        """Print command title."""
        if self.quiet:
            return
        title = pyfiglet.figlet_format(name, font="small")
        rich.print(Text(title))

    def epilog(self) -> str:
        """Get epilog text to be printed underneath help."""
        return (
            "Exit codes: 0 success, 1 configuration or domain failure,"
            " 2 numerical failure.\nThe env variable FLEP_WORKERS overrides"
            " the sweep worker count."
        )

    def summary(self, title: str, values: dict[str, Any]) -> None:
        """Print a two-column table of scalar results.

        Args:
            title --- table title.
            values --- name to value mapping; nested mappings are skipped.
        """
        if self.quiet:
            return
        table = Table(title=title)
        table.add_column(
            "Quantity", justify="right", style="cyan", no_wrap=True
        )
        table.add_column("Value", style="magenta")
        for name, value in values.items():
            if isinstance(value, (dict, list)):
                continue
            if isinstance(value, float):
                value = f"{value:.10g}"
            table.add_row(name, str(value))
        self.console.print(table)

    def assumptions(self, rows: Sequence[tuple[str, str, str, str]]) -> None:
        """Print the pass/fail table of an assumption report."""
        if self.quiet:
            return
        table = Table(title="Assumptions")
        table.add_column("Tag", style="cyan", no_wrap=True)
        table.add_column("Check")
        table.add_column("Status", no_wrap=True)
        table.add_column("Detail", style="magenta")
        for tag, description, status, detail in rows:
            style = self.ok_style if status == "pass" else self.danger_style
            table.add_row(tag, description, Text(status, style=style), detail)
        self.console.print(table)

    def sweep(self, rows: Sequence[Any]) -> None:
        """Print the rows of a sweep."""
        if self.quiet:
            return
        table = Table(title="Sweep")
        for column in (
            "k",
            "a*-a",
            "I1",
            "I1/pred",
            "eps",
            "eps/pred",
            "eps^2s lambda",
            "profile err",
            "resolved",
        ):
            table.add_column(column, justify="right")
        for r in rows:
            table.add_row(
                str(r.k),
                f"{r.a_star_minus_a:.4e}",
                f"{r.I1:.6e}",
                f"{r.I1 / r.I1_pred:.4f}",
                f"{r.epsilon:.4e}",
                f"{r.epsilon / r.eps_pred:.4f}",
                f"{r.eps2s_lambda:.5f}",
                f"{r.profile_err:.3e}",
                "yes" if r.resolved else "no",
            )
        self.console.print(table)

    def artifacts(self, paths: Sequence[str]) -> None:
        """Print where artifacts were written."""
        if self.quiet or not paths:
            return
        self.console.print("\nArtifacts:", style="bold underline")
        for path in paths:
            self.console.print(f"  {path}", style="cyan")

    def success(self, name: str) -> None:
        if self.quiet:
            return
        self.console.print(f"\n{name} finished. :rocket:", style=self.ok_style)

    def error(self, error: Exception, code: int) -> None:
        """Print an error banner with its exit code.

        Args:
            error --- the failure raised by the experiment.
            code --- exit code the command will return.
        """
        kind = "Configuration" if code == 1 else "Numerical"
        self.console.print(
            f"\n{kind} failure :warning: (exit code {code})",
            style=self.danger_style,
        )
        self.console.print(Text(str(error)))
