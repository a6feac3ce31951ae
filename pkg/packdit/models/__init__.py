"""Pydantic data models shared across packdit."""

from .config import (
    CodecConfig,
    DiTConfig,
    DIT_PRESETS,
    RecipeConfig,
    ScheduleConfig,
    StageConfig,
    default_task_probs,
)
from .motion import MotionSchema
from .results import DatasetManifest, DiffusionLossTerms, LossRecord, MetricsReport
from .tasks import Coupling, StageKind, TaskKind, TRAINABLE_TASKS
from .toy import Direction, Shape, Speed, ToyMotionSpec

__all__ = [
    "CodecConfig",
    "DiTConfig",
    "DIT_PRESETS",
    "RecipeConfig",
    "ScheduleConfig",
    "StageConfig",
    "default_task_probs",
    "MotionSchema",
    "DatasetManifest",
    "DiffusionLossTerms",
    "LossRecord",
    "MetricsReport",
    "Coupling",
    "StageKind",
    "TaskKind",
    "TRAINABLE_TASKS",
    "Direction",
    "Shape",
    "Speed",
    "ToyMotionSpec",
]
