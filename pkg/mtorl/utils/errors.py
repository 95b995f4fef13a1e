import sys
import traceback
from typing import Optional

from rich.console import Console

console = Console(stderr=True)


class MtorlError(Exception):
    """Base class for every error raised by mtorl."""


class ConfigError(MtorlError, ValueError):
    """Invalid or inconsistent run configuration."""


class DataError(MtorlError, ValueError):
    """Malformed journey logs, profiles or derived samples."""


class ShapeError(MtorlError, ValueError):
    """Array shapes that do not agree with each other or with a config."""


class NumericsError(MtorlError, ValueError):
    """Invalid numeric input (non-finite values, out-of-range arguments)."""


class GradientCheckError(NumericsError):
    """Finite-difference gradient check could not be evaluated."""


class NonFiniteLossError(NumericsError):
    """Training produced a NaN or infinite loss."""

    def __init__(self, batch_index: int, epoch: Optional[int] = None, component: str = "total"):
        self.batch_index = batch_index
        self.epoch = epoch
        self.component = component
        where = f"batch {batch_index}"
        if epoch is not None:
            where = f"epoch {epoch}, {where}"
        super().__init__(f"non-finite {component} loss at {where}")


class CheckpointError(MtorlError):
    """Checkpoint file is missing its header or has an unsupported format."""


def print_traceback(error: Exception, title: str = "Error occurred"):
    """
    Print a clean, readable traceback with file + line context.
    """

    console.print(f"\n[red]✗ {title}[/red]\n")

    _, _, exc_tb = sys.exc_info()
    for frame in traceback.extract_tb(exc_tb):
        console.print(
            f"[red]File[/red] {frame.filename}, "
            f"[red]line[/red] {frame.lineno}, "
            f"[red]in[/red] {frame.name}"
        )
        if frame.line:
            console.print(f"  → {frame.line}")

    console.print(f"\n[bold red]Message:[/bold red] {error}")
