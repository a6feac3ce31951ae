"""Parametric toy trajectories in the 8-dim toy schema."""

import math
from typing import Tuple

import numpy as np

from ..core.motion import TOY, MotionSequence
from ..models.toy import Direction, Shape, Speed, ToyMotionSpec
from .grammar import spec_to_caption

LINEAR_SPEED = {Speed.SLOW: 0.01, Speed.FAST: 0.04}
ANGULAR_SPEED = {Speed.SLOW: 0.05, Speed.FAST: 0.15}
CIRCLE_RADIUS = 0.3
ZIGZAG_PERIOD = 8
PHASE_WAVELENGTH = 0.2
DEFAULT_NOISE = 0.002

DIRECTION_VECTORS = {
    Direction.LEFT: np.array([-1.0, 0.0]),
    Direction.RIGHT: np.array([1.0, 0.0]),
    Direction.UP: np.array([0.0, 1.0]),
    Direction.DOWN: np.array([0.0, -1.0]),
}


def velocity_profile(spec: ToyMotionSpec, start_angle: float = 0.0) -> np.ndarray:
    """(n_frames, 2) per-frame displacement before any jitter."""
    n = spec.n_frames
    frames = np.arange(n)
    if spec.shape == Shape.STILL:
        return np.zeros((n, 2))
    if spec.shape == Shape.CIRCLE:
        sign = 1.0 if spec.direction == Direction.CCW else -1.0
        omega = sign * ANGULAR_SPEED[spec.speed]
        theta = start_angle + omega * frames
        return CIRCLE_RADIUS * omega * np.stack([-np.sin(theta), np.cos(theta)], axis=1)
    step = LINEAR_SPEED[spec.speed]
    forward = DIRECTION_VECTORS[spec.direction]
    velocity = np.tile(step * forward, (n, 1))
    if spec.shape == Shape.ZIGZAG:
        lateral = np.array([-forward[1], forward[0]])
        flips = np.where((frames // ZIGZAG_PERIOD) % 2 == 0, 1.0, -1.0)
        velocity = velocity + step * flips[:, None] * lateral
    return velocity


def finite_difference(positions: np.ndarray, start: np.ndarray) -> np.ndarray:
    """Per-frame displacement of ``positions``; the first frame is measured from ``start``."""
    return np.diff(np.concatenate([start[None, :], positions]), axis=0)


def assemble_features(positions: np.ndarray, velocity: np.ndarray) -> np.ndarray:
    """Stack position, velocity, heading, speed and path phase into toy-schema frames."""
    heading = np.arctan2(velocity[:, 1], velocity[:, 0])
    speed = np.linalg.norm(velocity, axis=1)
    path = np.cumsum(speed)
    angle = 2 * math.pi * path / PHASE_WAVELENGTH
    return np.concatenate(
        [positions, velocity, heading[:, None], speed[:, None], np.sin(angle)[:, None], np.cos(angle)[:, None]],
        axis=1,
    )


def generate_item(
    spec: ToyMotionSpec, noise_scale: float = DEFAULT_NOISE, rng: np.random.Generator = None
) -> Tuple[MotionSequence, str]:
    """One (motion, caption) pair; positions carry Gaussian jitter of std ``noise_scale``.

    Velocity, heading, speed and phase are all read off the jittered positions.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    start = rng.uniform(-0.5, 0.5, size=2)
    start_angle = rng.uniform(0.0, 2 * math.pi)
    positions = start + np.cumsum(velocity_profile(spec, start_angle), axis=0)
    if noise_scale > 0:
        positions = positions + rng.normal(0.0, noise_scale, size=positions.shape)
    velocity = finite_difference(positions, start)
    return MotionSequence(TOY, assemble_features(positions, velocity)), spec_to_caption(spec)
