"""Task and stage enumerations."""

from enum import Enum
from typing import Tuple


class TaskKind(str, Enum):
    """Generation tasks. The first five are trainable; the last two are inference-only."""
    T2M = "t2m"
    M2T = "m2t"
    UNCOND_MOTION = "uncond-motion"
    UNCOND_TEXT = "uncond-text"
    JOINT = "joint"
    PREDICT = "predict"
    INBETWEEN = "inbetween"

    @property
    def trainable(self) -> bool:
        return self in TRAINABLE_TASKS


TRAINABLE_TASKS: Tuple[TaskKind, ...] = (
    TaskKind.T2M,
    TaskKind.M2T,
    TaskKind.UNCOND_MOTION,
    TaskKind.UNCOND_TEXT,
    TaskKind.JOINT,
)


class StageKind(str, Enum):
    """Training stages of the recipe."""
    UNCOND = "uncond"
    JOINT_GEN = "joint"
    T2M = "t2m"
    M2T = "m2t"
    MIXED = "mixed"


class Coupling(str, Enum):
    """How the two stacks exchange information through the mutual blocks."""
    NONE = "none"
    MUTUAL = "mutual"
    MOTION_READS_TEXT = "motion-reads-text"
    TEXT_READS_MOTION = "text-reads-motion"
