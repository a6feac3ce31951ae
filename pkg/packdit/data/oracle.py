"""Rule-based classifier inverting the toy generator."""

from typing import List, Sequence

import numpy as np

from ..exceptions import ValidationError
from ..models.toy import MAX_FRAMES, MIN_FRAMES, Direction, Shape, Speed, ToyMotionSpec
from ..core.motion import MotionSequence
from .generator import ZIGZAG_PERIOD

SPEED_BOUNDARY = 0.025
CURVATURE_THRESHOLD = 0.02
MIN_REVERSALS = 3
STILL_DISPLACEMENT = 0.05
MOVING_SPEED = 0.005
LATERAL_FRACTION = 0.3
# a full zigzag period cancels the sideways swing
HEADING_WINDOW = 2 * ZIGZAG_PERIOD
LATERAL_WINDOW = 4


def _wrap(angle: np.ndarray) -> np.ndarray:
    return (angle + np.pi) % (2 * np.pi) - np.pi


def window_velocity(velocity: np.ndarray, window: int) -> np.ndarray:
    """Mean velocity over every run of ``window`` consecutive frames."""
    window = max(1, min(window, velocity.shape[0]))
    path = np.concatenate([np.zeros((1, velocity.shape[1])), np.cumsum(velocity, axis=0)])
    return (path[window:] - path[:-window]) / window


def moving_speed(velocity: np.ndarray) -> float:
    return float(np.linalg.norm(window_velocity(velocity, HEADING_WINDOW), axis=1).mean())


def turning_rate(velocity: np.ndarray) -> float:
    """Mean heading change per frame of the period-averaged velocity (positive is counterclockwise)."""
    smooth = window_velocity(velocity, HEADING_WINDOW)
    if smooth.shape[0] < 2:
        return 0.0
    heading = np.arctan2(smooth[:, 1], smooth[:, 0])
    return float(_wrap(np.diff(heading)).mean())


def lateral_reversals(velocity: np.ndarray) -> int:
    """Sign changes of the significant sideways component relative to the net direction."""
    smooth = window_velocity(velocity, LATERAL_WINDOW)
    net = velocity.sum(axis=0)
    norm = np.linalg.norm(net)
    forward = net / norm if norm > 0 else np.array([1.0, 0.0])
    lateral = forward[0] * smooth[:, 1] - forward[1] * smooth[:, 0]
    mean_speed = np.linalg.norm(smooth, axis=1).mean()
    signs = np.sign(lateral[np.abs(lateral) > LATERAL_FRACTION * mean_speed])
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def classify_motion(seq: MotionSequence) -> ToyMotionSpec:
    """Curvature, then reversals, then displacement, then speed and dominant axis.

    Reads the stored velocity field. Any clip length is accepted; the returned
    spec carries the length clamped to the toy range.
    """
    if seq.schema.name != "toy":
        raise ValidationError(f"the oracle only reads the toy schema, got {seq.schema.name!r}")
    velocity = seq.field("velocity_xy")
    n_frames = min(max(seq.n_frames, MIN_FRAMES), MAX_FRAMES)
    mean_speed = float(np.linalg.norm(velocity, axis=1).mean())
    speed = Speed.SLOW if mean_speed < SPEED_BOUNDARY else Speed.FAST
    net = velocity.sum(axis=0)

    if moving_speed(velocity) >= MOVING_SPEED:
        kappa = turning_rate(velocity)
        if abs(kappa) > CURVATURE_THRESHOLD:
            direction = Direction.CCW if kappa > 0 else Direction.CW
            return ToyMotionSpec(shape=Shape.CIRCLE, direction=direction, speed=speed, n_frames=n_frames)
    zigzag = lateral_reversals(velocity) >= MIN_REVERSALS
    if np.linalg.norm(net) < STILL_DISPLACEMENT:
        return ToyMotionSpec(shape=Shape.STILL, direction=Direction.NONE, speed=Speed.NONE, n_frames=n_frames)
    if abs(net[0]) >= abs(net[1]):
        direction = Direction.RIGHT if net[0] > 0 else Direction.LEFT
    else:
        direction = Direction.UP if net[1] > 0 else Direction.DOWN
    shape = Shape.ZIGZAG if zigzag else Shape.LINE
    return ToyMotionSpec(shape=shape, direction=direction, speed=speed, n_frames=n_frames)


def oracle_labels(motions: Sequence[MotionSequence]) -> List[ToyMotionSpec]:
    return [classify_motion(m) for m in motions]
