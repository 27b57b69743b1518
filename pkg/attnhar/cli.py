import typer
import os
import sys
from contextlib import contextmanager
from dataclasses import replace
from typing import Optional, Dict, Any, Iterator
from rich.console import Console
from rich.progress import (
    Progress,
    TextColumn,
    BarColumn,
    TaskProgressColumn,
    TimeRemainingColumn,
    SpinnerColumn,
)
from rich.markup import escape
from rich.table import Table
from rich.panel import Panel
from rich import box
from pathlib import Path

# Set UTF-8 encoding for Windows console to support Rich Unicode characters
if sys.platform == "win32":
    os.environ.setdefault("PYTHONIOENCODING", "utf-8")
    if hasattr(sys.stdout, "reconfigure"):
        sys.stdout.reconfigure(encoding="utf-8")
    if hasattr(sys.stderr, "reconfigure"):
        sys.stderr.reconfigure(encoding="utf-8")

from attnhar.data.pipeline import prepare_splits
from attnhar.data.synthetic import SyntheticSpec, gen_synthetic, write_synthetic
from attnhar.errors import ConfigError, DataError, NumericError
from attnhar.model.params import Variant
from attnhar.reporter.exporter import Exporter, trace_records
from attnhar.reporter.metrics import EvalReport, format_key_values
from attnhar.training.checkpoint import CheckpointMeta, load_checkpoint, save_checkpoint
from attnhar.training.trainer import EpochRecord, evaluate, predict, train
from attnhar.utils.config import Config, RunConfig, load_config
from attnhar.utils.logger import get_logger
from attnhar import __version__

app = typer.Typer(
    name="attnhar",
    help="Continuity-regularized attention LSTMs for multichannel activity recognition",
    add_completion=False,
)
console = Console()

CONFIG_OPTION = typer.Option(None, "--config", "-c", help="Run configuration JSON file")
SEED_OPTION = typer.Option(None, "--seed", "-s", help="Override the configured seed")
VERBOSE_OPTION = typer.Option(False, "--verbose", "-v", help="Enable verbose output")


def version_callback(value: bool):
    """Print version and exit."""
    if value:
        console.print(
            f"[bold cyan]attnhar[/bold cyan] version [bold green]{__version__}[/bold green]"
        )
        raise typer.Exit()


@app.callback()
def common(
    version: Optional[bool] = typer.Option(
        None, "--version", callback=version_callback, is_eager=True, help="Show version and exit"
    ),
) -> None:
    """Train, evaluate and inspect attention LSTMs on windowed sensor data."""


def _fail(title: str, error: Exception, code: int) -> None:
    console.print(f"[bold red]{title}:[/bold red] {escape(str(error))}", soft_wrap=True)
    raise typer.Exit(code=code)


@contextmanager
def exit_codes() -> Iterator[None]:
    """Map failures to exit codes: 2 configuration, 3 data or IO, 4 numeric."""
    try:
        yield
    except typer.Exit:
        raise
    except ConfigError as e:
        _fail("Configuration Error", e, 2)
    except NumericError as e:
        _fail("Numeric Error", e, 4)
    except (DataError, OSError) as e:
        _fail("Data Error", e, 3)
    except ValueError as e:
        _fail("Error", e, 2)


def _run_config(config: Optional[Path], seed: Optional[int]) -> RunConfig:
    cli_overrides: Dict[str, Any] = {"training.seed": seed}
    return load_config(config, cli_overrides).to_run_config()


def _header(title: str, run: RunConfig, extra: str = "") -> None:
    training = run.training
    header = Panel(
        f"[bold cyan]Data:[/bold cyan] {run.dataset.source} | "
        f"[bold cyan]Variant:[/bold cyan] {training.loss.variant.value} | "
        f"[bold cyan]H:[/bold cyan] {training.hidden_size} | "
        f"[bold cyan]λ1/λ2:[/bold cyan] {training.loss.lambda1}/{training.loss.lambda2} | "
        f"[bold cyan]Seed:[/bold cyan] {training.seed}" + extra,
        title=f"[bold blue]{title}[/bold blue]",
        border_style="blue",
        box=box.ROUNDED,
    )
    console.print(header)
    console.print()


def _report_table(title: str, result: EvalReport) -> Table:
    table = Table(
        title=f"[bold blue]{title}[/bold blue]",
        box=box.ROUNDED,
        border_style="blue",
        show_header=True,
        header_style="bold cyan",
    )
    table.add_column("Class", style="cyan", no_wrap=True)
    table.add_column("Precision", justify="right")
    table.add_column("Recall", justify="right")
    table.add_column("F1", justify="right", style="bold")
    table.add_column("Support", justify="right")
    for i, name in enumerate(result.names()):
        table.add_row(
            name,
            f"{result.precision[i]:.4f}",
            f"{result.recall[i]:.4f}",
            f"{result.f1[i]:.4f}",
            str(result.support[i]),
        )
    mean_f1 = f"[bold green]{result.mean_f1:.4f}[/bold green]"
    table.add_row("[bold]mean F1[/bold]", "", "", mean_f1, "")
    table.add_row("weighted F1", "", "", f"{result.weighted_f1:.4f}", "")
    table.add_row("accuracy", "", "", f"{result.accuracy:.4f}", str(result.total))
    return table


def _report_metadata(meta: CheckpointMeta) -> Dict[str, Any]:
    """Run details shared by the reports of train and eval, so both write the same file."""
    return {
        "split": "test",
        "variant": meta.loss.variant.value,
        **{key: meta.extra.get(key) for key in ("seed", "best_epoch", "epochs")},
    }


def _export_report(result: EvalReport, path: Path, metadata: Dict[str, Any]) -> None:
    """Pick the report format from the file extension."""
    extension = path.suffix.lower()
    if extension in {".md", ".markdown"}:
        Exporter.export_report_markdown(result, path, metadata)
    elif extension == ".json":
        Exporter.export_report_json(result, path, metadata)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(format_key_values(result) + "\n", encoding="utf-8")


@app.command("train")
def train_command(
    config: Optional[Path] = CONFIG_OPTION,
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
    seed: Optional[int] = SEED_OPTION,
    verbose: bool = VERBOSE_OPTION,
) -> None:
    """Train a model, then write checkpoint, history and a test-split report."""
    logger = get_logger(verbose=verbose)

    with exit_codes():
        run = _run_config(config, seed)
        outputs = run.output
        if out is not None:
            outputs = replace(
                outputs,
                dir=out,
                checkpoint=out / outputs.checkpoint.name,
                history=out / outputs.history.name,
                report=out / outputs.report.name,
                report_markdown=out / outputs.report_markdown.name,
            )
        _header("attnhar train", run)

        with console.status("[bold cyan]Preparing windows...[/bold cyan]", spinner="dots"):
            splits = prepare_splits(run.dataset)
        console.print(
            "[bold green]✓[/bold green] Windows:"
            f" train [bold cyan]{len(splits.train)}[/bold cyan]"
            f", val [bold cyan]{len(splits.val)}[/bold cyan]"
            f", test [bold cyan]{len(splits.test)}[/bold cyan]"
            f" (T={splits.train.window_length}, D={splits.train.n_channels})"
        )
        console.print()

        with Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            BarColumn(complete_style="green", finished_style="bold green"),
            TaskProgressColumn(),
            TextColumn("•"),
            TimeRemainingColumn(),
            console=console,
            transient=False,
        ) as progress:
            task = progress.add_task("[cyan]Training[/cyan]", total=run.training.max_epochs)

            def update_progress(record: EpochRecord) -> None:
                progress.update(
                    task,
                    completed=record.epoch,
                    description=f"[cyan]Training[/cyan] val F1 {record.val_mean_f1:.3f}",
                )

            params, history = train(run.training, splits.train, splits.val, update_progress)
            progress.update(task, total=len(history), completed=len(history))

        loss_cfg = run.training.loss
        result = evaluate(params, loss_cfg, splits.test)
        meta = CheckpointMeta(
            loss=loss_cfg,
            stats=splits.stats,
            class_names=splits.train.class_names,
            window_length=splits.train.window_length,
            extra={
                "seed": run.training.seed,
                "best_epoch": history.best_epoch,
                "epochs": len(history),
            },
        )
        metadata = _report_metadata(meta)
        save_checkpoint(outputs.checkpoint, params, meta)
        Exporter.export_history_csv(history, outputs.history)
        Exporter.export_report_json(result, outputs.report, metadata)
        Exporter.export_report_markdown(result, outputs.report_markdown, metadata)

    console.print()
    console.print(_report_table("Test Split", result))
    if verbose:
        logger.info(f"[green]Best epoch:[/green] {history.best_epoch} of {len(history)}")
    console.print(
        f"\n[bold green]✓ Checkpoint:[/bold green] [cyan]{outputs.checkpoint}[/cyan]"
        f"\n[bold green]✓ History:[/bold green] [cyan]{outputs.history}[/cyan]"
        f"\n[bold green]✓ Report:[/bold green] [cyan]{outputs.report}[/cyan]",
        soft_wrap=True,
    )
    raise typer.Exit(code=0)


@app.command("eval")
def eval_command(
    config: Optional[Path] = CONFIG_OPTION,
    checkpoint: Optional[Path] = typer.Option(
        None, "--checkpoint", "-k", help="Checkpoint file (default: the configured one)"
    ),
    out: Optional[Path] = typer.Option(
        None, "--out", "-o", help="Report file (.json, .md, or anything else for key=value)"
    ),
    seed: Optional[int] = SEED_OPTION,
    verbose: bool = VERBOSE_OPTION,
) -> None:
    """Evaluate a checkpoint on the test split."""
    get_logger(verbose=verbose)

    with exit_codes():
        run = _run_config(config, seed)
        ckpt_path = checkpoint or run.output.checkpoint
        params, meta = load_checkpoint(ckpt_path)
        _header("attnhar eval", run, f"\n[bold cyan]Checkpoint:[/bold cyan] {ckpt_path}")

        splits = prepare_splits(run.dataset, stats=meta.stats)
        result = evaluate(params, meta.loss, splits.test)
        report_path = out or run.output.report
        _export_report(
            result,
            report_path,
            _report_metadata(meta),
        )

    console.print(_report_table("Test Split", result))
    console.print(format_key_values(result), soft_wrap=True, markup=False, highlight=False)
    console.print(
        f"\n[bold green]✓ Report:[/bold green] [cyan]{report_path}[/cyan]", soft_wrap=True
    )
    raise typer.Exit(code=0)


@app.command("export-attention")
def export_attention_command(
    config: Optional[Path] = CONFIG_OPTION,
    checkpoint: Optional[Path] = typer.Option(
        None, "--checkpoint", "-k", help="Checkpoint file (default: the configured one)"
    ),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Trace file (JSON lines)"),
    n: int = typer.Option(10, "--n", "-n", help="Number of windows to export"),
    split: str = typer.Option("test", "--split", help="Split to export: train, val or test"),
    include_x: bool = typer.Option(False, "--include-x", help="Also export the raw windows"),
    seed: Optional[int] = SEED_OPTION,
    verbose: bool = VERBOSE_OPTION,
) -> None:
    """Export the attention weights behind the first N predictions of a split."""
    logger = get_logger(verbose=verbose)

    with exit_codes():
        if n < 1:
            raise ValueError(f"--n must be at least 1, got {n}")
        run = _run_config(config, seed)
        ckpt_path = checkpoint or run.output.checkpoint
        params, meta = load_checkpoint(ckpt_path)
        if meta.loss.variant is Variant.PLAIN:
            logger.warning(
                "Plain variant has no attention; exporting one-hot alpha at the last step"
            )

        dataset = prepare_splits(run.dataset, stats=meta.stats).get(split).head(n)
        if len(dataset) == 0:
            raise DataError(f"{split} split has no windows")
        prediction = predict(params, meta.loss, dataset)
        trace_path = out or run.output.trace
        count = Exporter.export_trace_jsonl(
            trace_records(dataset, prediction, include_x), trace_path
        )

    console.print(
        f"[bold green]✓ Exported {count} attention trace(s) to:[/bold green] "
        f"[cyan]{trace_path}[/cyan]",
        soft_wrap=True,
    )
    raise typer.Exit(code=0)


@app.command("gen-synthetic")
def gen_synthetic_command(
    config: Optional[Path] = CONFIG_OPTION,
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
    seed: Optional[int] = SEED_OPTION,
    verbose: bool = VERBOSE_OPTION,
) -> None:
    """Write a planted-motif dataset as CSV files plus manifest and ground truth."""
    logger = get_logger(verbose=verbose)

    with exit_codes():
        loaded = Config(config)
        section = loaded.get("dataset.synthetic") or {}
        if not isinstance(section, dict):
            raise ConfigError("must be a JSON object", "dataset.synthetic")
        spec = SyntheticSpec.from_dict(section)
        if seed is not None:
            spec = replace(spec, seed=seed)
        out_dir = out or loaded.resolve(loaded.get("output.synthetic_dir"))

        with console.status("[bold cyan]Generating windows...[/bold cyan]", spinner="dots"):
            splits = gen_synthetic(spec)
            written = write_synthetic(spec, splits, out_dir)

    table = Table(
        title="[bold blue]Synthetic Dataset[/bold blue]",
        box=box.ROUNDED,
        border_style="blue",
        show_header=True,
        header_style="bold cyan",
    )
    table.add_column("Split", style="cyan", no_wrap=True)
    table.add_column("Windows", justify="right", style="bold")
    table.add_column("Rows", justify="right")
    for dataset in splits:
        table.add_row(dataset.name, str(len(dataset)), str(len(dataset) * spec.T))
    console.print(table)
    if verbose:
        for path in written:
            logger.info(f"[green]Wrote[/green] {path}")
    console.print(
        f"\n[bold green]✓ Dataset written to:[/bold green] [cyan]{out_dir}[/cyan]",
        soft_wrap=True,
    )
    raise typer.Exit(code=0)


def main():
    app()


if __name__ == "__main__":
    main()
