"""Command-line interface: dataset generation, training, sampling, evaluation, inspection, ablation."""

from pathlib import Path
from typing import Callable, List, Optional

import typer
from pydantic import ValidationError as PydanticValidationError
from rich.table import Table

from .config import get_config
from .core.container import read_motion_file, write_motion_file, write_trace
from .data.dataset import generate_dataset, load_dataset
from .data.generator import DEFAULT_NOISE
from .evaluation.evaluator import evaluate
from .evaluation.report import show_report, write_report
from .exceptions import ConfigError, DataError, PackDiTError, ValidationError
from .experiments.ablation import run_ablation
from .inference.requests import (
    INBETWEEN_PREFIX,
    INBETWEEN_SUFFIX,
    PREDICT_KEEP,
    SampleRequest,
    inbetween_mask,
    prediction_mask,
)
from .inference.sampler import PackDiTPipeline
from .models.tasks import TaskKind
from .networks.checkpoint import load_checkpoint, read_checkpoint_header
from .training.recipes import RECIPES, load_recipe
from .training.trainer import ALL_STAGES, run_training
from .utils.console import console, set_quiet
from .utils.torch_utils import count_parameters, set_threads

app = typer.Typer(help="PackDiT: joint motion and text generation with mutual-attention diffusion transformers")
dataset_app = typer.Typer(help="Toy motion-language dataset")
app.add_typer(dataset_app, name="dataset")

EXIT_CODES = {ConfigError: 2, DataError: 3}


def _run(action: Callable[[], None]) -> None:
    """Run a command body, turning packdit errors into exit codes."""
    try:
        action()
    except PackDiTError as exc:
        console.print(f"[red]✗ {exc}[/red]")
        code = next((c for cls, c in EXIT_CODES.items() if isinstance(exc, cls)), 1)
        raise typer.Exit(code)


@app.callback()
def main(quiet: bool = typer.Option(False, "--quiet", help="Silence console output")):
    try:
        config = get_config()
    except ConfigError as exc:
        console.print(f"[red]✗ {exc}[/red]")
        raise typer.Exit(2)
    set_quiet(quiet or config.quiet)
    set_threads(config.threads)


@dataset_app.command("gen")
def dataset_gen(
    n: int = typer.Option(..., "--n", help="Number of items"),
    seed: int = typer.Option(0, help="Generation seed"),
    out: Path = typer.Option(..., help="Output directory"),
    noise: float = typer.Option(DEFAULT_NOISE, help="Position jitter std"),
):
    """Generate the toy dataset with its manifest."""

    def action():
        manifest = generate_dataset(n, seed, out, noise)
        console.print(
            f"[green]✓ Wrote {manifest.n_items} items to {out} "
            f"(train/val/test {manifest.splits['train']}/{manifest.splits['val']}/{manifest.splits['test']})[/green]"
        )
        console.print(f"[dim]content hash {manifest.content_hash}[/dim]")

    _run(action)


@app.command()
def train(
    recipe: str = typer.Option("desk", help=f"Builtin recipe: {', '.join(RECIPES)}"),
    stage: str = typer.Option(ALL_STAGES, help="uncond, joint, t2m, m2t, mixed or all"),
    config: Optional[Path] = typer.Option(None, help="YAML file overriding recipe keys"),
    data: Path = typer.Option(..., help="Dataset directory"),
    out: Path = typer.Option(..., help="Output directory for checkpoints and logs"),
    seed: int = typer.Option(0, help="Training seed"),
    resume: bool = typer.Option(False, help="Continue from <out>/state.pt"),
    max_steps: Optional[int] = typer.Option(None, help="Stop after this many optimizer steps in total"),
):
    """Train the codec and the diffusion stages of a recipe."""

    def action():
        recipe_config = load_recipe(recipe, config)
        state = run_training(recipe_config, load_dataset(data), out, seed, stage, resume, max_steps)
        console.print(f"[green]✓ {state.step} steps, checkpoints in {out}[/green]")

    _run(action)


def _keep_mask(task: TaskKind, n_frames: int, keep_prefix: Optional[float], keep_suffix: Optional[float]):
    try:
        if task == TaskKind.PREDICT:
            return prediction_mask(n_frames, PREDICT_KEEP if keep_prefix is None else keep_prefix)
        if task == TaskKind.INBETWEEN:
            return inbetween_mask(
                n_frames,
                INBETWEEN_PREFIX if keep_prefix is None else keep_prefix,
                INBETWEEN_SUFFIX if keep_suffix is None else keep_suffix,
            )
    except ValueError as exc:
        raise ConfigError(str(exc))
    return None


@app.command()
def sample(
    task: TaskKind = typer.Option(..., help="Task to sample"),
    ckpt: Path = typer.Option(..., help="Checkpoint (.pkck)"),
    text: Optional[str] = typer.Option(None, help="Caption for t2m (optional for predict/inbetween)"),
    motion: Optional[Path] = typer.Option(None, help="PKMO file; its first sequence is used"),
    keep_prefix: Optional[float] = typer.Option(None, help="Known leading fraction (predict 0.5, inbetween 0.25)"),
    keep_suffix: Optional[float] = typer.Option(None, help="Known trailing fraction for inbetween (0.25)"),
    n_frames: int = typer.Option(48, help="Frames to generate"),
    steps: Optional[int] = typer.Option(None, help="DDIM steps (default PACKDIT_STEPS or 50)"),
    eta: Optional[float] = typer.Option(None, help="DDIM eta (default PACKDIT_ETA or 0)"),
    seed: int = typer.Option(0, help="Sampling seed"),
    cache: bool = typer.Option(False, help="Compute the clean condition once instead of every step"),
    out: Path = typer.Option(..., help="Output: PKMO for motion, UTF-8 text for captions"),
    trace: Optional[Path] = typer.Option(None, help="Write per-step latents (PKTR) here"),
):
    """Sample one task from a checkpoint."""

    def action():
        config = get_config()
        source = read_motion_file(motion)[0] if motion is not None else None
        frames = source.n_frames if source is not None else n_frames
        try:
            request = SampleRequest(
                task=task,
                steps=steps or config.sample_steps,
                eta=config.eta if eta is None else eta,
                seed=seed,
                caption=text,
                motion=source,
                keep_mask=_keep_mask(task, frames, keep_prefix, keep_suffix),
                n_frames=frames,
                trace=trace is not None,
                use_condition_cache=cache,
            )
        except PydanticValidationError as exc:
            raise ValidationError(f"invalid sample request: {exc}")
        result = PackDiTPipeline.from_checkpoint(ckpt).sample(request)
        if result.motion is not None:
            write_motion_file(out, [result.motion])
            console.print(f"[green]✓ Motion ({result.motion.n_frames} frames) written to {out}[/green]")
        if result.caption is not None:
            caption_path = out if result.motion is None else out.with_suffix(".txt")
            caption_path.parent.mkdir(parents=True, exist_ok=True)
            caption_path.write_text(result.caption + "\n", encoding="utf-8")
            console.print(f"[green]✓ Caption written to {caption_path}:[/green] {result.caption}")
        if trace is not None:
            write_trace(trace, result.trace)
            console.print(f"[dim]trace of {len(result.trace)} steps written to {trace}[/dim]")

    _run(action)


@app.command("eval")
def evaluate_command(
    ckpt: Path = typer.Option(..., help="Checkpoint (.pkck)"),
    data: Path = typer.Option(..., help="Dataset directory"),
    task: TaskKind = typer.Option(..., help="Task to evaluate"),
    n: int = typer.Option(100, "--n", help="Number of samples"),
    seed: int = typer.Option(0, help="Sampling seed"),
    steps: Optional[int] = typer.Option(None, help="DDIM steps"),
    report: Path = typer.Option(..., help="MetricsReport YAML output"),
):
    """Score a task; poor metrics still exit 0."""

    def action():
        result = evaluate(PackDiTPipeline.from_checkpoint(ckpt), load_dataset(data), task, n, seed, steps)
        write_report(result, report)
        show_report(result)
        console.print(f"[green]✓ Report written to {report}[/green]")

    _run(action)


@app.command("inspect")
def inspect_command(ckpt: Path = typer.Option(..., help="Checkpoint (.pkck)")):
    """Print the stored configuration, parameter counts and schedule."""

    def action():
        header = read_checkpoint_header(ckpt)
        contents = load_checkpoint(ckpt)
        table = Table(title=f"Checkpoint {ckpt.name}")
        table.add_column("Key", style="cyan")
        table.add_column("Value", style="white")
        for key, value in header["dit"].items():
            table.add_row(f"dit.{key}", str(value))
        for key, value in header["codec"].items():
            table.add_row(f"codec.{key}", str(value))
        for key, value in header["schedule"].items():
            table.add_row(f"schedule.{key}", str(value))
        table.add_row("schema", header["schema"])
        table.add_row("vocab size", str(len(header["vocab"])))
        for key, value in header.get("metadata", {}).items():
            table.add_row(f"meta.{key}", str(value))
        model = contents.model
        table.add_row("params.motion_dit", f"{count_parameters(model.motion_dit):,}", style="green")
        table.add_row("params.text_dit", f"{count_parameters(model.text_dit):,}", style="green")
        table.add_row("params.projection", f"{count_parameters(model.projection):,}", style="green")
        table.add_row("params.codec", f"{count_parameters(contents.codec):,}", style="green")
        console.print(table)

    _run(action)


@app.command()
def ablate(
    data: Path = typer.Option(..., help="Dataset directory"),
    out: Path = typer.Option(..., help="Output directory"),
    recipe: str = typer.Option("desk", help="Base recipe"),
    config: Optional[Path] = typer.Option(None, help="YAML file overriding recipe keys"),
    seed: List[int] = typer.Option([0, 1, 2], help="Seeds (repeatable)"),
    n_eval: int = typer.Option(64, help="T2M samples per run"),
    steps: int = typer.Option(50, help="DDIM steps"),
):
    """Run the Dim_P, patch-size and pre-train ablations."""

    def action():
        run_ablation(load_recipe(recipe, config), load_dataset(data), out, seed, n_eval, steps)

    _run(action)


if __name__ == "__main__":
    app()
