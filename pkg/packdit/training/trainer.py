"""Runs a recipe's stages in order: codec first, then the diffusion stages, with checkpoints and resume."""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import torch
from rich.progress import Progress
from rich.table import Table

from ..core.diffusion import build_schedule
from ..core.motion import NormStats, builtin_schema, compute_norm_stats
from ..data.dataset import ToyDataset
from ..data.grammar import all_captions
from ..exceptions import ConfigError, DataError
from ..models.config import RecipeConfig, StageConfig
from ..models.results import LossRecord
from ..models.tasks import StageKind
from ..networks.checkpoint import CheckpointContents, build_model, load_checkpoint, save_checkpoint
from ..networks.text_codec import Vocab
from ..utils.console import console
from ..utils.torch_utils import make_generator, set_seeds
from .batches import PairedBatch, motion_batch, select
from .codec_trainer import text_latents, train_codec
from .recipes import build_dit_config
from .stages import apply_update, make_optimizer, stage_objective

STATE_NAME = "state.pt"
LOSS_LOG_NAME = "loss_log.jsonl"
ALL_STAGES = "all"


@dataclass
class TrainState:
    """Position in the recipe plus the loss history; weights and RNG live next to it in state.pt."""
    recipe: str
    seed: int
    stage_index: int = 0
    epoch: int = 0
    batch_index: int = 0
    stage_step: int = 0
    step: int = 0
    codec_done: bool = False
    finished: bool = False
    history: List[Dict[str, Any]] = field(default_factory=list)
    checkpoints: Dict[str, str] = field(default_factory=dict)

    def losses(self, stage: Optional[str] = None) -> List[float]:
        return [r["total"] for r in self.history if stage is None or r["stage"] == stage]


def _float32_stats(stats: NormStats) -> NormStats:
    # checkpoints store float32, keep training on the same values
    return NormStats(mean=stats.mean.astype(np.float32), std=stats.std.astype(np.float32))


class Trainer:
    """Trains codec + PackDiT on a toy dataset following a recipe."""

    def __init__(
        self,
        recipe: RecipeConfig,
        dataset: ToyDataset,
        out_dir: Union[str, Path],
        seed: int = 0,
    ):
        if not recipe.stages:
            raise ConfigError(f"recipe {recipe.name} has no stages")
        train = dataset["train"]
        if len(train) == 0:
            raise DataError("the training split is empty")
        self.recipe = recipe
        self.dataset = dataset
        self.out_dir = Path(out_dir)
        self.seed = seed
        self.schema = builtin_schema(recipe.schema_name)
        self.motions = train.motions
        self.captions = train.captions
        for seq in self.motions:
            if seq.schema != self.schema:
                raise DataError(f"dataset schema {seq.schema.name} does not match recipe schema {self.schema.name}")

        self.dit_config = build_dit_config(recipe)
        self.schedule = build_schedule(
            recipe.schedule.kind,
            recipe.schedule.steps,
            cosine_s=recipe.schedule.cosine_s,
            beta_start=recipe.schedule.beta_start,
            beta_end=recipe.schedule.beta_end,
        )
        self.stats = _float32_stats(compute_norm_stats(self.motions))
        vocab_source = list(self.captions) + (all_captions() if self.schema.name == "toy" else [])
        self.vocab = Vocab.from_captions(vocab_source)

        set_seeds(seed)
        self.model, self.codec = build_model(self.dit_config, recipe.codec, self.vocab)
        self.state = TrainState(recipe=recipe.name, seed=seed)
        self.latents: Optional[torch.Tensor] = None
        self._optimizer: Optional[torch.optim.Optimizer] = None
        self._generator: Optional[torch.Generator] = None
        self._saved_optimizer: Optional[Dict[str, Any]] = None
        self._saved_generator: Optional[torch.Tensor] = None

    @property
    def state_path(self) -> Path:
        return self.out_dir / STATE_NAME

    @property
    def log_path(self) -> Path:
        return self.out_dir / LOSS_LOG_NAME

    def checkpoint_path(self, label: str) -> Path:
        return self.out_dir / f"{label}.pkck"

    def _prepare_codec(self) -> None:
        if not self.state.codec_done:
            train_codec(self.codec, self.model.projection, self.captions, self.recipe.codec)
            self.state.codec_done = True
        self.codec.eval()
        self.latents = text_latents(self.codec, self.model.projection, self.captions).float()

    def _load_weights(self, path: Path, stage: StageConfig) -> None:
        if not path.exists():
            raise DataError(f"stage {stage.label}: checkpoint {path} not found")
        contents = load_checkpoint(path)
        self.model.load_state_dict(contents.model.state_dict())
        self.codec.load_state_dict(contents.codec.state_dict())
        self.state.codec_done = True
        self._prepare_codec()
        console.print(f"[dim]stage {stage.label} starts from {path}[/dim]")

    def _epoch_batches(self, index: int, stage: StageConfig, epoch: int) -> List[np.ndarray]:
        n = len(self.motions)
        order = np.random.default_rng([self.seed, stage.seed, index, epoch]).permutation(n)
        return [order[i : i + stage.batch_size] for i in range(0, n, stage.batch_size)]

    def _batch(self, index: int, stage: StageConfig, epoch: int, rows: np.ndarray, start: int) -> PairedBatch:
        motion = motion_batch([self.motions[i] for i in rows], self.stats, self.recipe.patch_size)
        if stage.stage == StageKind.UNCOND:
            # the text side of the unconditional stage is drawn from its own order
            text_order = np.random.default_rng([self.seed, stage.seed, index, epoch, 1]).permutation(len(self.motions))
            text = select(self.latents, text_order[start : start + len(rows)])
            return PairedBatch(motion=motion, text=text, paired=False)
        return PairedBatch(motion=motion, text=select(self.latents, rows), paired=True)

    def _log(self, record: LossRecord) -> None:
        with open(self.log_path, "a") as f:
            f.write(json.dumps(record.model_dump()) + "\n")

    def _rewrite_log(self) -> None:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        with open(self.log_path, "w") as f:
            for record in self.state.history:
                f.write(json.dumps(record) + "\n")

    def save_state(self) -> None:
        payload = {
            "position": asdict(self.state),
            "model": self.model.state_dict(),
            "codec": self.codec.state_dict(),
            "optimizer": self._optimizer.state_dict() if self._optimizer is not None else None,
            "generator": self._generator.get_state() if self._generator is not None else None,
        }
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            torch.save(payload, self.state_path)
        except OSError as exc:
            raise DataError(f"cannot write training state to {self.state_path}: {exc}")

    def load_state(self) -> None:
        """Restore weights, optimizer moments, RNG and position from state.pt."""
        try:
            payload = torch.load(self.state_path, weights_only=True)
        except (OSError, RuntimeError) as exc:
            raise DataError(f"cannot resume from {self.state_path}: {exc}")
        position = payload["position"]
        if position["recipe"] != self.recipe.name or position["seed"] != self.seed:
            raise ConfigError(
                f"{self.state_path} belongs to recipe {position['recipe']} seed {position['seed']}, "
                f"not {self.recipe.name} seed {self.seed}"
            )
        self.state = TrainState(**position)
        self.model.load_state_dict(payload["model"])
        self.codec.load_state_dict(payload["codec"])
        self._saved_optimizer = payload["optimizer"]
        self._saved_generator = payload["generator"]
        if self.state.codec_done:
            self._prepare_codec()
        self._rewrite_log()
        console.print(f"[yellow]Resuming at stage {self.state.stage_index}, step {self.state.step}[/yellow]")

    def _save_stage_checkpoint(self, stage: StageConfig) -> Path:
        path = self.checkpoint_path(stage.label)
        contents = CheckpointContents(
            model=self.model,
            codec=self.codec,
            schedule=self.schedule,
            stats=self.stats,
            schema=self.schema,
            metadata={
                "recipe": self.recipe.name,
                "stage": stage.label,
                "seed": self.seed,
                "step": self.state.step,
                "patch_size": self.recipe.patch_size,
                "dataset_hash": self.dataset.manifest.content_hash,
            },
        )
        try:
            save_checkpoint(path, contents)
        except DataError as exc:
            raise DataError(f"stage {stage.label}: {exc}")
        self.state.checkpoints[stage.label] = str(path)
        return path

    def _start_stage(self, index: int, stage: StageConfig, selected: List[int]) -> None:
        fresh = self.state.epoch == 0 and self.state.batch_index == 0 and self.state.stage_step == 0
        if fresh:
            if stage.init_from is not None:
                self._load_weights(self.checkpoint_path(stage.init_from), stage)
            elif index > 0 and index == selected[0] and self.checkpoint_path(self.recipe.stages[index - 1].label).exists():
                self._load_weights(self.checkpoint_path(self.recipe.stages[index - 1].label), stage)
        if self.latents is None:
            self._prepare_codec()
        self.model.train()
        self._optimizer = make_optimizer(self.model, stage.learning_rate)
        self._generator = make_generator(self.seed + stage.seed + 1000 * index)
        if not fresh and self._saved_optimizer is not None:
            self._optimizer.load_state_dict(self._saved_optimizer)
        if not fresh and self._saved_generator is not None:
            self._generator.set_state(self._saved_generator)
        self._saved_optimizer = self._saved_generator = None

    def _run_stage(self, index: int, stage: StageConfig, budget: Optional[int]) -> bool:
        """Train one stage; False when the global step budget ran out first."""
        batches_per_epoch = len(self._epoch_batches(index, stage, 0))
        total = stage.epochs * batches_per_epoch
        if stage.max_steps is not None:
            total = min(total, stage.max_steps)
        with Progress(console=console, transient=True) as progress:
            task = progress.add_task(f"[cyan]Stage {stage.label}", total=total, completed=self.state.stage_step)
            while self.state.epoch < stage.epochs:
                batches = self._epoch_batches(index, stage, self.state.epoch)
                while self.state.batch_index < len(batches):
                    if stage.max_steps is not None and self.state.stage_step >= stage.max_steps:
                        break
                    if budget is not None and self.state.step >= budget:
                        self.save_state()
                        return False
                    start = self.state.batch_index * stage.batch_size
                    batch = self._batch(index, stage, self.state.epoch, batches[self.state.batch_index], start)
                    loss = stage_objective(
                        self.model, batch, stage.stage, self.schedule, self._generator, stage.lam, stage.task_probs
                    )
                    terms = apply_update(self.model, loss, self._optimizer, stage.grad_clip)
                    self.state.step += 1
                    self.state.stage_step += 1
                    self.state.batch_index += 1
                    record = LossRecord(
                        step=self.state.step,
                        stage=stage.label,
                        task=terms.task or stage.stage.value,
                        loss_motion=terms.loss_motion,
                        loss_text=terms.loss_text,
                        total=terms.total,
                    )
                    self.state.history.append(record.model_dump())
                    self._log(record)
                    if self.state.stage_step % stage.log_every == 0:
                        progress.update(task, description=f"[cyan]Stage {stage.label} loss {terms.total:.4f}")
                    progress.advance(task)
                if stage.max_steps is not None and self.state.stage_step >= stage.max_steps:
                    break
                self.state.epoch += 1
                self.state.batch_index = 0
                self.save_state()
        return True

    def run(
        self,
        only_stage: str = ALL_STAGES,
        resume: bool = False,
        max_total_steps: Optional[int] = None,
    ) -> TrainState:
        """Run the selected stages; ``max_total_steps`` stops early with a resumable state.pt."""
        selected = self._select(only_stage)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        if resume and self.state_path.exists():
            self.load_state()
        else:
            self.state.stage_index = selected[0]
            self._rewrite_log()

        console.print(f"\n[bold blue]Training recipe {self.recipe.name} (seed {self.seed})[/bold blue]")
        while not self.state.finished:
            index = self.state.stage_index
            stage = self.recipe.stages[index]
            self._start_stage(index, stage, selected)
            if not self._run_stage(index, stage, max_total_steps):
                console.print(f"[yellow]Stopped after {self.state.step} steps; resume with the same arguments[/yellow]")
                return self.state
            path = self._save_stage_checkpoint(stage)
            console.print(f"[green]✓ Stage {stage.label} done, checkpoint {path}[/green]")
            later = [i for i in selected if i > index]
            self.state.epoch = self.state.batch_index = self.state.stage_step = 0
            if later:
                self.state.stage_index = later[0]
            else:
                self.state.finished = True
            self._optimizer = self._generator = None
            self.save_state()

        self._show_report()
        return self.state

    def _select(self, only_stage: str) -> List[int]:
        if only_stage == ALL_STAGES:
            return list(range(len(self.recipe.stages)))
        selected = [i for i, s in enumerate(self.recipe.stages) if s.stage.value == only_stage or s.label == only_stage]
        if not selected:
            raise ConfigError(f"recipe {self.recipe.name} has no {only_stage!r} stage")
        return selected

    def _show_report(self) -> None:
        table = Table(title="Training Report")
        table.add_column("Stage", style="cyan")
        table.add_column("Steps", style="yellow")
        table.add_column("First loss", style="white")
        table.add_column("Last loss", style="green")
        table.add_column("Checkpoint", style="white")
        for label, path in self.state.checkpoints.items():
            losses = self.state.losses(label)
            table.add_row(
                label,
                str(len(losses)),
                f"{losses[0]:.4f}" if losses else "-",
                f"{losses[-1]:.4f}" if losses else "-",
                path,
            )
        console.print(table)


def run_training(
    recipe: RecipeConfig,
    dataset: ToyDataset,
    out_dir: Union[str, Path],
    seed: int = 0,
    only_stage: str = ALL_STAGES,
    resume: bool = False,
    max_total_steps: Optional[int] = None,
) -> TrainState:
    return Trainer(recipe, dataset, out_dir, seed).run(only_stage, resume, max_total_steps)


def read_loss_log(path: Union[str, Path]) -> List[LossRecord]:
    try:
        with open(path) as f:
            return [LossRecord(**json.loads(line)) for line in f if line.strip()]
    except OSError as exc:
        raise DataError(f"cannot read loss log {path}: {exc}")
