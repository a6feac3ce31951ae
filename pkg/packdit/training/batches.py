"""Tensor batches fed to the stage objectives."""

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from ..core.motion import MotionSequence, NormStats, normalize, pad_token_batch, patchify
from ..exceptions import ValidationError


@dataclass
class MotionBatch:
    """Normalized patch tokens (B, N, D) and token validity (B, N)."""
    tokens: torch.Tensor
    mask: torch.Tensor

    @property
    def size(self) -> int:
        return self.tokens.shape[0]


@dataclass
class TextBatch:
    """Text latent tokens (B, L_T, Dim_P)."""
    latents: torch.Tensor

    @property
    def size(self) -> int:
        return self.latents.shape[0]


@dataclass
class PairedBatch:
    """Motion and text batches; ``paired`` says row i of each describes the same clip."""
    motion: MotionBatch
    text: TextBatch
    paired: bool = True

    def require_pairs(self, what: str) -> None:
        if not self.paired or self.motion.size != self.text.size:
            raise ValidationError(f"{what} needs a paired motion/text batch")


def max_tokens_for(n_frames: int, patch_size: int) -> int:
    return math.ceil(n_frames / patch_size)


def motion_batch(
    sequences: Sequence[MotionSequence],
    stats: NormStats,
    patch_size: int,
    dtype: torch.dtype = torch.float32,
) -> MotionBatch:
    """Normalize, patchify and pad sequences to the longest one in the batch."""
    if not sequences:
        raise ValidationError("empty motion batch")
    grids = [patchify(normalize(seq, stats), patch_size) for seq in sequences]
    tokens, mask = pad_token_batch(grids, max(g.n_tokens for g in grids))
    return MotionBatch(tokens=torch.as_tensor(tokens, dtype=dtype), mask=torch.as_tensor(mask))


def select(batch_latents: torch.Tensor, indices: np.ndarray) -> TextBatch:
    return TextBatch(latents=batch_latents[torch.as_tensor(indices, dtype=torch.long)])
