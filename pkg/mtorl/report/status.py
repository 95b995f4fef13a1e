"""
Status reporting for mtorl commands.

Section headers, check marks and a completion panel on the console, plus a
rich progress bar for epoch loops.
"""

from contextlib import contextmanager
from typing import Callable, Iterator, Optional

from rich.console import Console
from rich.panel import Panel
from rich.progress import BarColumn, MofNCompleteColumn, Progress, SpinnerColumn, TextColumn, TimeElapsedColumn


class StatusReporter:
    """
    Central system for reporting status during a run.

    Usage:
        reporter = StatusReporter()

        with reporter.section("Loading journeys"):
            reporter.success("Prepared 160/20/20 samples")

        with reporter.progress("Training", total=800) as advance:
            for epoch in ...:
                advance(f"val F1 {f1:.3f}")
    """

    def __init__(self, console: Optional[Console] = None):
        self.console = console or Console()
        self._in_section = False

    def header(self, title: str, detail: str = ""):
        """Display command header."""
        self.console.print()
        suffix = f": [bold cyan]{detail}[/bold cyan]" if detail else ""
        self.console.print(f"📈 {title}{suffix}")
        self.console.print()

    @contextmanager
    def section(self, title: str, show_spinner: bool = False) -> Iterator[None]:
        icon = "⏳" if show_spinner else "›"
        self.console.print(f"[dim]{icon} {title}...[/dim]")
        self._in_section = True
        try:
            yield
        finally:
            self._in_section = False

    def _indent(self) -> str:
        return "  " if self._in_section else ""

    def success(self, message: str):
        self.console.print(f"{self._indent()}[green]✓[/green] {message}")

    def warning(self, message: str):
        self.console.print(f"{self._indent()}[yellow]⚠[/yellow] {message}")

    @contextmanager
    def progress(self, description: str, total: int) -> Iterator[Callable[[str], None]]:
        """
        Progress bar; the yielded callable advances one step and sets a
        status suffix.
        """
        columns = (
            SpinnerColumn(),
            TextColumn("[bold blue]{task.description}"),
            BarColumn(),
            MofNCompleteColumn(),
            TextColumn("{task.fields[status]}"),
            TimeElapsedColumn(),
        )
        with Progress(*columns, console=self.console, transient=True) as bar:
            task = bar.add_task(description, total=total, status="")

            def advance(status: str = "") -> None:
                bar.update(task, advance=1, status=status)

            yield advance

    def complete(self, message: str = "Run complete!"):
        """Display completion message."""
        self.console.print()
        self.console.print(Panel(
            f"[bold green]✨ {message}[/bold green]",
            border_style="green",
            padding=(0, 1)
        ))
        self.console.print()


# Global instance
_reporter = StatusReporter()


def get_reporter() -> StatusReporter:
    """Get global status reporter instance."""
    return _reporter
