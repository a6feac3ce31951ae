"""Closed caption grammar, one caption per toy motion class."""

from typing import Dict, List, Tuple

from ..exceptions import ValidationError
from ..models.toy import CARDINAL, ROTATIONAL, Direction, Shape, Speed, ToyMotionSpec

GRAMMAR_VERSION = "1"

SPEED_WORDS = {Speed.SLOW: "slowly", Speed.FAST: "quickly"}
ROTATION_WORDS = {Direction.CW: "clockwise", Direction.CCW: "counterclockwise"}


def spec_to_caption(spec: ToyMotionSpec) -> str:
    if spec.shape == Shape.STILL:
        return "a point stays still"
    speed = SPEED_WORDS[spec.speed]
    if spec.shape == Shape.LINE:
        return f"a point moves {spec.direction.value} {speed}"
    if spec.shape == Shape.ZIGZAG:
        return f"a point moves {spec.direction.value} in a zigzag {speed}"
    return f"a point moves in a circle {ROTATION_WORDS[spec.direction]} {speed}"


def all_specs(n_frames: int = 48) -> List[ToyMotionSpec]:
    """Every valid class in a fixed order: lines, zigzags, circles, still."""
    specs = []
    for shape in (Shape.LINE, Shape.ZIGZAG):
        for direction in CARDINAL:
            for speed in (Speed.SLOW, Speed.FAST):
                specs.append(ToyMotionSpec(shape=shape, direction=direction, speed=speed, n_frames=n_frames))
    for direction in ROTATIONAL:
        for speed in (Speed.SLOW, Speed.FAST):
            specs.append(
                ToyMotionSpec(shape=Shape.CIRCLE, direction=direction, speed=speed, n_frames=n_frames)
            )
    specs.append(
        ToyMotionSpec(shape=Shape.STILL, direction=Direction.NONE, speed=Speed.NONE, n_frames=n_frames)
    )
    return specs


def all_captions() -> List[str]:
    return [spec_to_caption(spec) for spec in all_specs()]


_CAPTION_TABLE: Dict[str, Tuple[str, str, str]] = {
    spec_to_caption(spec): spec.class_key for spec in all_specs()
}
_CLASS_INDEX: Dict[Tuple[str, str, str], int] = {
    spec.class_key: i for i, spec in enumerate(all_specs())
}


def caption_to_spec(caption: str, n_frames: int = 48) -> ToyMotionSpec:
    """Inverse of spec_to_caption (case and spacing are ignored)."""
    key = _CAPTION_TABLE.get(" ".join(caption.lower().split()))
    if key is None:
        raise ValidationError(f"caption {caption!r} is not in toy grammar v{GRAMMAR_VERSION}")
    shape, direction, speed = key
    return ToyMotionSpec(shape=shape, direction=direction, speed=speed, n_frames=n_frames)


def is_grammatical(caption: str) -> bool:
    return " ".join(caption.lower().split()) in _CAPTION_TABLE


def class_index(spec: ToyMotionSpec) -> int:
    """Position of the spec's class in ``all_specs()``."""
    return _CLASS_INDEX[spec.class_key]


def n_classes() -> int:
    return len(_CLASS_INDEX)
