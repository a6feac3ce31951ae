"""Parametric specification of a toy motion clip."""

from enum import Enum
from typing import Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

MIN_FRAMES = 32
MAX_FRAMES = 64


class Shape(str, Enum):
    LINE = "line"
    CIRCLE = "circle"
    ZIGZAG = "zigzag"
    STILL = "still"


class Direction(str, Enum):
    LEFT = "left"
    RIGHT = "right"
    UP = "up"
    DOWN = "down"
    CW = "cw"
    CCW = "ccw"
    NONE = "none"


class Speed(str, Enum):
    SLOW = "slow"
    FAST = "fast"
    NONE = "none"


CARDINAL = (Direction.LEFT, Direction.RIGHT, Direction.UP, Direction.DOWN)
ROTATIONAL = (Direction.CW, Direction.CCW)


class ToyMotionSpec(BaseModel):
    """Shape / direction / speed class plus clip length."""
    model_config = ConfigDict(frozen=True)

    shape: Shape
    direction: Direction
    speed: Speed
    n_frames: int = Field(48, ge=MIN_FRAMES, le=MAX_FRAMES)

    @model_validator(mode="after")
    def _check_combination(self) -> "ToyMotionSpec":
        if self.shape == Shape.STILL:
            if self.direction != Direction.NONE or self.speed != Speed.NONE:
                raise ValueError("a still motion has no direction and no speed")
        else:
            allowed = ROTATIONAL if self.shape == Shape.CIRCLE else CARDINAL
            if self.direction not in allowed:
                raise ValueError(f"{self.shape.value} cannot move {self.direction.value}")
            if self.speed == Speed.NONE:
                raise ValueError(f"{self.shape.value} needs a speed")
        return self

    @property
    def class_key(self) -> Tuple[str, str, str]:
        """Identity of the class, ignoring clip length."""
        return (self.shape.value, self.direction.value, self.speed.value)

    @property
    def caption(self) -> str:
        from ..data.grammar import spec_to_caption

        return spec_to_caption(self)

    @classmethod
    def from_caption(cls, caption: str, n_frames: int = 48) -> "ToyMotionSpec":
        from ..data.grammar import caption_to_spec

        return caption_to_spec(caption, n_frames=n_frames)
