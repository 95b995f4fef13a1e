from pathlib import Path
from typing import List, Optional

import typer
from pyfiglet import Figlet
from rich import box
from rich.align import Align
from rich.console import Console
from rich.markup import escape
from rich.panel import Panel
from rich.text import Text

from importlib.metadata import version, PackageNotFoundError

from mtorl.utils.errors import MtorlError, print_traceback
from mtorl.utils.logging import configure_logging, debug_enabled

try:
    __version__ = version("mtorl")
except PackageNotFoundError:
    from mtorl import __version__


console = Console()

app = typer.Typer(help="mtorl - multi-task offline RL for multi-channel advertising")


def create_logo() -> Text:
    """
    Render the MTORL banner with pyfiglet.
    """
    f = Figlet(font="slant")
    logo_text = f.renderText("MTORL")

    logo = Text()
    colors = ["bright_cyan", "cyan", "bright_green", "green", "bright_yellow", "yellow"]
    for i, line in enumerate(logo_text.split("\n")):
        if line.strip():
            logo.append(line + "\n", style=f"bold {colors[i % len(colors)]}")
        else:
            logo.append(line + "\n")
    return logo


@app.callback(invoke_without_command=True)
def main(
    ctx: typer.Context,
    version: bool = typer.Option(
        None,
        "--version",
        "-v",
        help="Show mtorl version and exit.",
        is_eager=True,
    ),
):
    """
    mtorl CLI
    """
    if version:
        console.print(f"[bold green]mtorl[/bold green] v{__version__}")
        raise typer.Exit()

    configure_logging()

    # Banner only without a subcommand or during --help
    if ctx.invoked_subcommand is not None and not ctx.resilient_parsing:
        return

    panel = Panel(
        Align.center(create_logo()),
        border_style="bold bright_green",
        padding=(1, 4),
        title="[bold bright_yellow]⚡ MTORL ⚡[/bold bright_yellow]",
        subtitle="[bold bright_cyan]Channel recommendation and budget allocation[/bold bright_cyan]",
        box=box.HEAVY,
    )
    console.print("\n")
    console.print(panel)
    console.print("\n")
    console.print("[dim]Type [bold]mtorl --help[/bold] to see available commands.[/dim]\n")


ConfigOption = typer.Option(
    None,
    "--config",
    "-c",
    help="YAML or JSON config file (defaults are used when omitted)",
    exists=True,
    dir_okay=False,
    resolve_path=True,
)
SetOption = typer.Option(None, "--set", help="Override a config value, e.g. training.lr=0 (repeatable)")
SeedOption = typer.Option(None, "--seed", help="Random seed (overrides the config)")


def _fail(title: str, error: Exception):
    console.print(f"\n[bold red]❌ {title} failed:[/bold red] {escape(str(error))}")
    if debug_enabled():
        print_traceback(error, title=f"{title} failed")
    raise typer.Exit(code=1)


@app.command("gen-data")
def gen_data(
    config: Optional[Path] = ConfigOption,
    overrides: Optional[List[str]] = SetOption,
    seed: Optional[int] = SeedOption,
    out: Path = typer.Option(Path("data"), "--out", "-o", help="Output directory"),
):
    """
    Generate a synthetic journey log, profiles and the environment ground truth.
    """
    from mtorl.cli.runs import prepare_run, run_gen_data

    try:
        run = prepare_run("gen-data", config, overrides or [], seed, out)
        run_gen_data(run)
    except (MtorlError, OSError) as e:
        _fail("Data generation", e)
    console.print(f"[bold green]✅ Corpus written to[/bold green] {out}")


@app.command()
def train(
    config: Optional[Path] = ConfigOption,
    overrides: Optional[List[str]] = SetOption,
    seed: Optional[int] = SeedOption,
    out: Path = typer.Option(Path("runs/train"), "--out", "-o", help="Output directory"),
):
    """
    Train on the journey log; writes checkpoint, history CSV and test-split report.
    """
    from mtorl.cli.runs import prepare_run, run_train, training_summary
    from mtorl.report import ReportFormatter

    try:
        run = prepare_run("train", config, overrides or [], seed, out)
        run.reporter.header("Training", str(run.config["data"]["journeys"]))
        outcome = run_train(run)
    except (MtorlError, OSError) as e:
        _fail("Training", e)

    formatter = ReportFormatter(console)
    formatter.display_training_summary(training_summary(outcome))
    formatter.display_eval_report(outcome.test_report, split="test")
    run.reporter.complete(f"Outputs in {out}")


@app.command()
def evaluate(
    checkpoint: Path = typer.Option(..., "--checkpoint", help="Checkpoint from `mtorl train`", exists=True, dir_okay=False),
    split: str = typer.Option("test", "--split", help="train, validation or test"),
    config: Optional[Path] = ConfigOption,
    overrides: Optional[List[str]] = SetOption,
    seed: Optional[int] = SeedOption,
    out: Path = typer.Option(Path("runs/evaluate"), "--out", "-o", help="Output directory"),
):
    """
    Re-score a checkpoint on a data split; also writes reward predictions for `allocate`.
    """
    from mtorl.cli.runs import prepare_run, run_evaluate
    from mtorl.report import ReportFormatter

    try:
        run = prepare_run("evaluate", config, overrides or [], seed, out)
        report = run_evaluate(run, checkpoint, split)
    except (MtorlError, OSError) as e:
        _fail("Evaluation", e)
    ReportFormatter(console).display_eval_report(report, split=split)


@app.command()
def simulate(
    checkpoint: Optional[Path] = typer.Option(None, "--checkpoint", help="Checkpoint for --policy model", dir_okay=False),
    policy: str = typer.Option("model", "--policy", help="model, random or greedy"),
    budget: Optional[float] = typer.Option(None, "--budget", help="Override procedure.budget"),
    config: Optional[Path] = ConfigOption,
    overrides: Optional[List[str]] = SetOption,
    seed: Optional[int] = SeedOption,
    out: Path = typer.Option(Path("runs/simulate"), "--out", "-o", help="Output directory"),
):
    """
    Run the budgeted exploration/exploitation procedure in the synthetic environment.
    """
    from mtorl.cli.runs import prepare_run, run_simulate
    from mtorl.report import ReportFormatter

    try:
        run = prepare_run("simulate", config, overrides or [], seed, out)
        report = run_simulate(run, checkpoint, policy, budget)
    except (MtorlError, OSError) as e:
        _fail("Simulation", e)
    ReportFormatter(console).display_run_report(report)


@app.command()
def allocate(
    predictions: Optional[Path] = typer.Option(None, "--predictions", help="Reward predictions from `mtorl evaluate`", dir_okay=False),
    tau: Optional[float] = typer.Option(None, "--tau", help="Reward threshold for the implicit policy"),
    alpha: Optional[float] = typer.Option(None, "--alpha", help="Weight of the implicit policy in the merge"),
    top_n: Optional[int] = typer.Option(None, "--top-n", help="Number of users to rank"),
    config: Optional[Path] = ConfigOption,
    overrides: Optional[List[str]] = SetOption,
    seed: Optional[int] = SeedOption,
    out: Path = typer.Option(Path("runs/allocate"), "--out", "-o", help="Output directory"),
):
    """
    Explicit, implicit and merged channel policies plus the top-N user ranking.
    """
    from mtorl.cli.runs import prepare_run, run_allocate
    from mtorl.report import ReportFormatter

    flags = [
        f"allocation.{key}={value}"
        for key, value in (("tau", tau), ("alpha", alpha), ("top_n", top_n))
        if value is not None
    ]
    try:
        run = prepare_run("allocate", config, list(overrides or []) + flags, seed, out)
        result = run_allocate(run, predictions)
    except (MtorlError, OSError) as e:
        _fail("Allocation", e)
    ReportFormatter(console).display_allocation(
        {"explicit": result.explicit, "implicit": result.implicit, "merged": result.merged},
        result.ranking,
    )


def run():
    app()


if __name__ == "__main__":
    run()
