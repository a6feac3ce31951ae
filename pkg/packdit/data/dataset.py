"""Toy dataset generation, on-disk layout and loading."""

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import yaml
from pydantic import ValidationError as PydanticValidationError
from rich.progress import Progress

from ..config import get_config
from ..core.container import read_captions, read_motion_file, write_captions, write_motion_file
from ..core.motion import MotionSequence
from ..exceptions import DataError, ValidationError
from ..models.results import DatasetManifest
from ..models.toy import MAX_FRAMES, MIN_FRAMES
from ..utils.console import console
from .generator import DEFAULT_NOISE, generate_item
from .grammar import GRAMMAR_VERSION, all_specs

SPLITS = ("train", "val", "test")
SPLIT_RATIOS = (0.8, 0.1, 0.1)
MANIFEST_NAME = "manifest.yaml"


@dataclass
class DatasetSplit:
    motions: List[MotionSequence]
    captions: List[str]

    def __len__(self) -> int:
        return len(self.motions)


@dataclass
class ToyDataset:
    manifest: DatasetManifest
    splits: Dict[str, DatasetSplit]

    def __getitem__(self, split: str) -> DatasetSplit:
        if split not in self.splits:
            raise DataError(f"dataset has no split {split!r}")
        return self.splits[split]


def split_sizes(n_items: int) -> Dict[str, int]:
    n_train = int(n_items * SPLIT_RATIOS[0])
    n_val = int(n_items * SPLIT_RATIOS[1])
    return {"train": n_train, "val": n_val, "test": n_items - n_train - n_val}


def _make_item(args: Tuple[int, int, int, float]) -> Tuple[MotionSequence, str]:
    seed, index, class_id, noise_scale = args
    rng = np.random.default_rng([seed, index])
    n_frames = int(rng.integers(MIN_FRAMES, MAX_FRAMES + 1))
    spec = all_specs(n_frames)[class_id]
    return generate_item(spec, noise_scale, rng)


def generate_items(
    n_items: int, seed: int, noise_scale: float = DEFAULT_NOISE, workers: Optional[int] = None
) -> List[Tuple[MotionSequence, str]]:
    """Class-balanced items; item i draws only from its own (seed, i) stream."""
    n_classes = len(all_specs())
    assignment = np.arange(n_items) % n_classes
    np.random.default_rng(seed).shuffle(assignment)
    jobs = [(seed, i, int(assignment[i]), noise_scale) for i in range(n_items)]
    items = []
    with ThreadPoolExecutor(max_workers=workers) as pool, Progress(console=console, transient=True) as progress:
        task = progress.add_task("[cyan]Generating toy motions...", total=n_items)
        for item in pool.map(_make_item, jobs):
            items.append(item)
            progress.advance(task)
    return items


def _content_hash(out_dir: Path) -> str:
    digest = hashlib.sha256()
    for split in SPLITS:
        for suffix in (".pkmo", ".captions"):
            digest.update((out_dir / f"{split}{suffix}").read_bytes())
    return digest.hexdigest()


def generate_dataset(
    n_items: int,
    seed: int,
    out_dir: Union[str, Path],
    noise_scale: float = DEFAULT_NOISE,
) -> DatasetManifest:
    """Write train/val/test PKMO + caption files and a manifest to ``out_dir``."""
    if n_items < 10:
        raise ValidationError(f"a toy dataset needs at least 10 items, got {n_items}")
    if noise_scale < 0:
        raise ValidationError(f"noise_scale must be nonnegative, got {noise_scale}")
    out_dir = Path(out_dir)
    items = generate_items(n_items, seed, noise_scale, workers=get_config().threads)
    sizes = split_sizes(n_items)
    start = 0
    for split in SPLITS:
        chunk = items[start : start + sizes[split]]
        start += sizes[split]
        if chunk:
            write_motion_file(out_dir / f"{split}.pkmo", [m for m, _ in chunk])
        else:
            (out_dir / f"{split}.pkmo").write_bytes(b"")
        write_captions(out_dir / f"{split}.captions", [c for _, c in chunk])
    manifest = DatasetManifest(
        n_items=n_items,
        seed=seed,
        splits=sizes,
        split_ratios=SPLIT_RATIOS,
        schema_name="toy",
        grammar_version=GRAMMAR_VERSION,
        noise_scale=noise_scale,
        content_hash=_content_hash(out_dir),
    )
    try:
        with open(out_dir / MANIFEST_NAME, "w") as f:
            yaml.safe_dump(manifest.model_dump(mode="json"), f, sort_keys=False)
    except OSError as exc:
        raise DataError(f"cannot write manifest to {out_dir}: {exc}")
    return manifest


def load_dataset(data_dir: Union[str, Path]) -> ToyDataset:
    data_dir = Path(data_dir)
    try:
        with open(data_dir / MANIFEST_NAME) as f:
            manifest = DatasetManifest(**yaml.safe_load(f))
    except OSError as exc:
        raise DataError(f"cannot read dataset manifest in {data_dir}: {exc}")
    except (yaml.YAMLError, TypeError, PydanticValidationError) as exc:
        raise DataError(f"malformed manifest in {data_dir}: {exc}")
    splits = {}
    for split in SPLITS:
        captions = read_captions(data_dir / f"{split}.captions")
        motions = read_motion_file(data_dir / f"{split}.pkmo") if captions else []
        if len(motions) != len(captions) or len(captions) != manifest.splits.get(split, -1):
            raise DataError(
                f"{data_dir}: split {split} has {len(motions)} motions and {len(captions)} captions, "
                f"manifest says {manifest.splits.get(split)}"
            )
        splits[split] = DatasetSplit(motions=motions, captions=captions)
    return ToyDataset(manifest=manifest, splits=splits)
