"""
Report Formatter.

Renders evaluation, training, simulation and allocation results as rich
tables and panels.
"""

from typing import Dict, Mapping, Optional

from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from mtorl.allocation.policy import ChannelPolicy
from mtorl.allocation.ranking import UserRanking
from mtorl.simulator.procedure import RunReport
from mtorl.training.metrics import EvalReport


class ReportFormatter:
    """
    Usage:
        formatter = ReportFormatter()
        formatter.display_eval_report(report, split="test")
    """

    def __init__(self, console: Optional[Console] = None):
        self.console = console or Console()

    def display_eval_report(self, report: EvalReport, split: str = "test"):
        table = Table(title=f"Evaluation on {split}", show_header=True, header_style="bold")
        table.add_column("Metric")
        table.add_column("Value", justify="right")
        table.add_row(f"F1 ({report.average})", f"{report.f1:.4f}")
        table.add_row("Precision", f"{report.precision:.4f}")
        table.add_row("Recall", f"{report.recall:.4f}")
        table.add_row(f"Reward {report.reward_metric_name}", f"{report.reward_metric:.4f}")
        table.add_row("Valid steps", str(report.steps))
        if report.absent_channels:
            table.add_row("Channels absent from labels", str(report.absent_channels))
        self.console.print(table)

    def display_training_summary(self, summary: Mapping[str, object]):
        lines = [f"[bold]{key.replace('_', ' ').title()}:[/bold] {_fmt(value)}" for key, value in summary.items()]
        self.console.print(Panel(
            "\n".join(lines),
            title="[bold]Training[/bold]",
            border_style="blue",
            padding=(0, 2)
        ))

    def display_run_report(self, report: RunReport):
        exploration = report.exploration
        lines = [
            f"[bold]Agent:[/bold] {report.agent}",
            f"[bold]Cumulative penalized reward:[/bold] {report.cumulative_penalized_reward:.4f}",
            f"[bold]Cumulative gain:[/bold] {report.cumulative_gain:.4f}",
            f"[bold]Cost:[/bold] {report.cumulative_cost:.4f} of {report.budget:.4f}",
            f"[bold]Exposures / rounds:[/bold] {report.exposures} / {report.rounds}",
            f"[bold]Stopped by:[/bold] {report.stop_reason}",
            f"[bold]Exploration:[/bold] {exploration['exposures']} exposures, "
            f"cost {exploration['cost']:.4f}"
            + (" [yellow](exploration budget exhausted)[/yellow]" if exploration.get("exhausted") else ""),
        ]
        self.console.print(Panel(
            "\n".join(lines),
            title="[bold]Simulation[/bold]",
            border_style="green",
            padding=(1, 2)
        ))

    def display_allocation(
        self,
        policies: Dict[str, Optional[ChannelPolicy]],
        ranking: UserRanking,
    ):
        available = {name: p for name, p in policies.items() if p is not None}
        table = Table(title="Channel policies", show_header=True, header_style="bold")
        table.add_column("Channel")
        for name in available:
            table.add_column(name.title(), justify="right")
        m = next(iter(available.values())).m if available else 0
        for j in range(m):
            table.add_row(str(j), *(f"{p.probs[j]:.4f}" for p in available.values()))
        self.console.print(table)

        if len(ranking):
            top = Table(title=f"Top {len(ranking)} users", show_header=True, header_style="bold")
            top.add_column("#", justify="right")
            top.add_column("User")
            top.add_column("Score", justify="right")
            for rank, (user, score) in enumerate(ranking.entries, start=1):
                top.add_row(str(rank), user, f"{score:.4f}")
            self.console.print(top)


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)
