"""Projection-dim, patch-size and pre-train ablations scored by T2M oracle match."""

import statistics
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import yaml
from pydantic import BaseModel, Field
from rich.table import Table

from ..data.dataset import ToyDataset
from ..evaluation.evaluator import evaluate
from ..exceptions import DataError
from ..inference.sampler import PackDiTPipeline
from ..models.config import RecipeConfig
from ..models.tasks import StageKind, TaskKind
from ..training.trainer import Trainer
from ..utils.console import console

ABLATION_STAGES = (StageKind.UNCOND, StageKind.MIXED, StageKind.T2M)
REPORT_NAME = "ablation.yaml"


class AblationVariant(BaseModel):
    name: str
    dim_p: int = Field(64, gt=0)
    patch_size: int = Field(1, gt=0)
    pretrain: bool = True


class AblationResult(BaseModel):
    variant: AblationVariant
    scores: List[float]
    median: float


def ablation_variants(
    dim_ps: Sequence[int] = (64, 128, 256), patch_sizes: Sequence[int] = (1, 2, 4)
) -> List[AblationVariant]:
    """Baseline (first dim_p, first patch size, pre-trained) plus one-factor changes."""
    base_dim, base_patch = dim_ps[0], patch_sizes[0]
    variants = [AblationVariant(name="baseline", dim_p=base_dim, patch_size=base_patch)]
    variants += [AblationVariant(name=f"dim_p={d}", dim_p=d, patch_size=base_patch) for d in dim_ps[1:]]
    variants += [AblationVariant(name=f"patch={p}", dim_p=base_dim, patch_size=p) for p in patch_sizes[1:]]
    variants.append(AblationVariant(name="no-pretrain", dim_p=base_dim, patch_size=base_patch, pretrain=False))
    return variants


def variant_recipe(base: RecipeConfig, variant: AblationVariant) -> RecipeConfig:
    """Base recipe narrowed to the T2M path, with the variant's dims."""
    raw = base.model_dump(mode="json", by_alias=True)
    raw["name"] = f"{base.name}-{variant.name}"
    raw["patch_size"] = variant.patch_size
    raw["codec"]["dim_p"] = variant.dim_p
    wanted = [s.value for s in ABLATION_STAGES if variant.pretrain or s != StageKind.UNCOND]
    stages = [s for s in raw["stages"] if s["stage"] in wanted]
    for stage in stages:
        if stage.get("init_from") not in {s.get("name") or s["stage"] for s in stages}:
            stage["init_from"] = None
    raw["stages"] = stages
    return RecipeConfig(**raw)


def run_ablation(
    base: RecipeConfig,
    dataset: ToyDataset,
    out_dir: Union[str, Path],
    seeds: Sequence[int] = (0, 1, 2),
    n_eval: int = 64,
    steps: int = 50,
    variants: Optional[Sequence[AblationVariant]] = None,
) -> List[AblationResult]:
    out_dir = Path(out_dir)
    results = []
    for variant in variants or ablation_variants():
        recipe = variant_recipe(base, variant)
        scores = []
        for seed in seeds:
            run_dir = out_dir / variant.name / f"seed{seed}"
            console.print(f"[bold blue]Ablation {variant.name}, seed {seed}[/bold blue]")
            trainer = Trainer(recipe, dataset, run_dir, seed)
            trainer.run()
            final = trainer.checkpoint_path(recipe.stages[-1].label)
            pipeline = PackDiTPipeline.from_checkpoint(final)
            report = evaluate(pipeline, dataset, TaskKind.T2M, n_eval, seed=seed, steps=steps)
            scores.append(report.oracle_match)
        results.append(AblationResult(variant=variant, scores=scores, median=statistics.median(scores)))
    write_ablation(results, out_dir / REPORT_NAME)
    show_ablation(results)
    return results


def directional_checks(results: Sequence[AblationResult]) -> Dict[str, bool]:
    """Pre-training helps and finer patches help, compared on medians."""
    by_name = {r.variant.name: r.median for r in results}
    checks = {}
    if "baseline" in by_name and "no-pretrain" in by_name:
        checks["pretrain >= no-pretrain"] = by_name["baseline"] >= by_name["no-pretrain"]
    patches = sorted(
        (r.variant.patch_size, r.median)
        for r in results
        if r.variant.name == "baseline" or r.variant.name.startswith("patch=")
    )
    if len(patches) >= 2:
        checks[f"patch={patches[0][0]} >= patch={patches[-1][0]}"] = patches[0][1] >= patches[-1][1]
    return checks


def write_ablation(results: Sequence[AblationResult], path: Union[str, Path]) -> None:
    payload = {
        "results": [r.model_dump(mode="json") for r in results],
        "checks": directional_checks(results),
    }
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(yaml.safe_dump(payload, sort_keys=False))
    except OSError as exc:
        raise DataError(f"cannot write ablation report {path}: {exc}")


def show_ablation(results: Sequence[AblationResult]) -> None:
    table = Table(title="Ablation (T2M oracle match)")
    table.add_column("Variant", style="cyan")
    table.add_column("Dim_P", style="white")
    table.add_column("Patch", style="white")
    table.add_column("Pre-train", style="white")
    table.add_column("Scores", style="yellow")
    table.add_column("Median", style="green")
    for r in results:
        table.add_row(
            r.variant.name,
            str(r.variant.dim_p),
            str(r.variant.patch_size),
            "yes" if r.variant.pretrain else "no",
            ", ".join(f"{s:.3f}" for s in r.scores),
            f"{r.median:.3f}",
        )
    console.print(table)
    for check, passed in directional_checks(results).items():
        console.print(f"[{'green' if passed else 'red'}]{'✓' if passed else '✗'} {check}[/]")
