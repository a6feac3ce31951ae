"""Sampling requests and the default keep-masks of the inpainting tasks."""

from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..core.motion import MotionSequence
from ..models.tasks import TaskKind

PREDICT_KEEP = 0.5
INBETWEEN_PREFIX = 0.25
INBETWEEN_SUFFIX = 0.25


def prediction_mask(n_frames: int, keep: float = PREDICT_KEEP) -> List[bool]:
    """First ``keep`` fraction of the frames known."""
    if not 0.0 <= keep <= 1.0:
        raise ValueError(f"keep fraction must lie in [0, 1], got {keep}")
    n_keep = int(round(n_frames * keep))
    return [i < n_keep for i in range(n_frames)]


def inbetween_mask(n_frames: int, prefix: float = INBETWEEN_PREFIX, suffix: float = INBETWEEN_SUFFIX) -> List[bool]:
    """First ``prefix`` and last ``suffix`` fractions known."""
    if prefix < 0 or suffix < 0 or prefix + suffix > 1.0:
        raise ValueError(f"prefix {prefix} and suffix {suffix} must be nonnegative and sum to at most 1")
    n_prefix = int(round(n_frames * prefix))
    n_suffix = int(round(n_frames * suffix))
    return [i < n_prefix or i >= n_frames - n_suffix for i in range(n_frames)]


def _is_prefix(mask: List[bool]) -> bool:
    n_true = sum(mask)
    return all(mask[:n_true]) and not any(mask[n_true:])


def _is_prefix_suffix(mask: List[bool]) -> bool:
    n = len(mask)
    head = 0
    while head < n and mask[head]:
        head += 1
    tail = n
    while tail > head and mask[tail - 1]:
        tail -= 1
    return not any(mask[head:tail])


class SampleRequest(BaseModel):
    """One sampling call. Inpainting tasks get their default keep-mask when none is given."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    task: TaskKind
    steps: int = Field(50, ge=1)
    eta: float = Field(0.0, ge=0.0, le=1.0)
    seed: int = 0
    caption: Optional[str] = None
    motion: Optional[MotionSequence] = None
    keep_mask: Optional[List[bool]] = None
    n_frames: int = Field(48, ge=1)
    trace: bool = False
    use_condition_cache: bool = False
    mutual_enabled: bool = True

    @field_validator("caption")
    @classmethod
    def _strip(cls, caption: Optional[str]) -> Optional[str]:
        if caption is not None and not caption.strip():
            raise ValueError("caption is empty")
        return caption

    @model_validator(mode="after")
    def _check_task_inputs(self) -> "SampleRequest":
        if self.task == TaskKind.T2M and self.caption is None:
            raise ValueError("t2m needs a caption")
        if self.task == TaskKind.M2T and self.motion is None:
            raise ValueError("m2t needs a motion")
        if self.task in (TaskKind.PREDICT, TaskKind.INBETWEEN):
            if self.motion is None:
                raise ValueError(f"{self.task.value} needs a motion")
            if self.keep_mask is None:
                n = self.motion.n_frames
                self.keep_mask = prediction_mask(n) if self.task == TaskKind.PREDICT else inbetween_mask(n)
            if len(self.keep_mask) != self.motion.n_frames:
                raise ValueError(
                    f"keep_mask has {len(self.keep_mask)} entries for {self.motion.n_frames} frames"
                )
            if self.task == TaskKind.PREDICT and not _is_prefix(self.keep_mask):
                raise ValueError("a prediction keep_mask must be a run of known frames at the start")
            if self.task == TaskKind.INBETWEEN and not _is_prefix_suffix(self.keep_mask):
                raise ValueError("an in-between keep_mask must keep only a prefix and a suffix")
            self.n_frames = self.motion.n_frames
        return self

    def frame_mask(self) -> np.ndarray:
        return np.asarray(self.keep_mask, dtype=bool)
