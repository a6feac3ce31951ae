"""Motion feature schemas, corpus normalization and patch tokenization."""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from ..exceptions import ConfigError, ValidationError
from ..models.motion import MotionSchema

EPS_STD = 1e-6


def _humanml3d_layout(joints: int) -> Tuple[Tuple[str, int], ...]:
    # root rot velocity, root linear velocity (xz), root height, then per-joint blocks
    return (
        ("root_rotation", 1),
        ("root_velocity", 2),
        ("root_height", 1),
        ("joint_positions", (joints - 1) * 3),
        ("joint_rotations", (joints - 1) * 6),
        ("joint_velocities", joints * 3),
        ("foot_contacts", 4),
    )


HUMANML3D = MotionSchema(
    name="humanml3d",
    layout=_humanml3d_layout(22),
    total_dim=263,
    joint_count=22,
)

TOY = MotionSchema(
    name="toy",
    layout=(
        ("position_xy", 2),
        ("velocity_xy", 2),
        ("heading", 1),
        ("speed", 1),
        ("phase", 2),
    ),
    total_dim=8,
    joint_count=1,
)

_BUILTIN = {schema.name: schema for schema in (HUMANML3D, TOY)}


def builtin_schema(name: str) -> MotionSchema:
    """Look up one of the fixed schemas ("humanml3d" or "toy")."""
    try:
        return _BUILTIN[name]
    except KeyError:
        raise ConfigError(f"unknown motion schema {name!r}; expected one of {sorted(_BUILTIN)}")


@dataclass(frozen=True)
class MotionSequence:
    """frames x total_dim feature matrix bound to a schema. The array is read-only."""
    schema: MotionSchema
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] != self.schema.total_dim:
            raise ValidationError(
                f"motion data of shape {data.shape} does not match schema "
                f"{self.schema.name} (total_dim {self.schema.total_dim})"
            )
        if data.shape[0] == 0:
            raise ValidationError("a motion sequence needs at least one frame")
        if not np.isfinite(data).all():
            raise ValidationError("motion data contains NaN or Inf")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    def field(self, name: str) -> np.ndarray:
        """Columns of one schema field."""
        offsets = self.schema.offsets()
        if name not in offsets:
            raise ValidationError(f"schema {self.schema.name} has no field {name!r}")
        return self.data[:, offsets[name]]


@dataclass(frozen=True)
class NormStats:
    """Per-dimension mean and std; std is clamped to EPS_STD."""
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        std = np.asarray(self.std, dtype=np.float64).reshape(-1)
        if mean.shape != std.shape:
            raise ValidationError(f"mean {mean.shape} and std {std.shape} differ in length")
        std = np.maximum(std, EPS_STD)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def compute_norm_stats(corpus: Sequence[MotionSequence]) -> NormStats:
    """Mean/std over all frames of all sequences."""
    if not corpus:
        raise ValidationError("cannot compute normalization stats of an empty corpus")
    schema = corpus[0].schema
    for seq in corpus:
        if seq.schema != schema:
            raise ValidationError(
                f"corpus mixes schemas {schema.name!r} and {seq.schema.name!r}"
            )
    frames = np.concatenate([seq.data for seq in corpus], axis=0)
    return NormStats(mean=frames.mean(axis=0), std=frames.std(axis=0))


def _check_stats(seq: MotionSequence, stats: NormStats) -> None:
    if stats.dim != seq.schema.total_dim:
        raise ValidationError(
            f"stats have {stats.dim} dims, schema {seq.schema.name} has {seq.schema.total_dim}"
        )


def normalize(seq: MotionSequence, stats: NormStats) -> MotionSequence:
    _check_stats(seq, stats)
    return MotionSequence(seq.schema, (seq.data - stats.mean) / stats.std)


def denormalize(seq: MotionSequence, stats: NormStats) -> MotionSequence:
    _check_stats(seq, stats)
    return MotionSequence(seq.schema, seq.data * stats.std + stats.mean)


@dataclass(frozen=True)
class TokenGrid:
    """Patch tokens of one sequence.

    ``origin_frames`` counts the padded frames, so ``n_tokens * patch_size == origin_frames``;
    ``frame_mask`` marks the real (unpadded) frames and is always a prefix of True.
    """
    tokens: np.ndarray
    patch_size: int
    origin_frames: int
    frame_mask: np.ndarray

    def __post_init__(self):
        if self.tokens.shape[0] * self.patch_size != self.origin_frames:
            raise ValidationError(
                f"{self.tokens.shape[0]} tokens of patch {self.patch_size} "
                f"cannot cover {self.origin_frames} frames"
            )
        if self.frame_mask.shape != (self.origin_frames,):
            raise ValidationError("frame mask length must equal origin_frames")

    @property
    def n_tokens(self) -> int:
        return self.tokens.shape[0]

    @property
    def token_dim(self) -> int:
        return self.tokens.shape[1]

    @property
    def n_valid_frames(self) -> int:
        return int(self.frame_mask.sum())

    def token_mask(self) -> np.ndarray:
        """A token is valid when at least one of its frames is real."""
        return self.frame_mask.reshape(self.n_tokens, self.patch_size).any(axis=1)


def patchify(seq: MotionSequence, patch_size: int) -> TokenGrid:
    """Group ``patch_size`` consecutive frames into one token, zero-padding the tail."""
    if patch_size <= 0:
        raise ConfigError(f"patch_size must be positive, got {patch_size}")
    n_frames, dim = seq.data.shape
    pad = (-n_frames) % patch_size
    padded = np.concatenate([seq.data, np.zeros((pad, dim))], axis=0) if pad else seq.data
    total = n_frames + pad
    tokens = np.array(padded).reshape(total // patch_size, patch_size * dim)
    mask = np.zeros(total, dtype=bool)
    mask[:n_frames] = True
    return TokenGrid(tokens=tokens, patch_size=patch_size, origin_frames=total, frame_mask=mask)


def unpatchify(grid: TokenGrid, schema: MotionSchema) -> MotionSequence:
    """Inverse of patchify; padding frames are stripped."""
    if grid.token_dim != grid.patch_size * schema.total_dim:
        raise ValidationError(
            f"token dim {grid.token_dim} != patch {grid.patch_size} x {schema.total_dim}"
        )
    frames = grid.tokens.reshape(grid.origin_frames, schema.total_dim)
    return MotionSequence(schema, frames[: grid.n_valid_frames])


def pad_token_batch(grids: Sequence[TokenGrid], max_tokens: int) -> Tuple[np.ndarray, np.ndarray]:
    """Stack grids into (B, max_tokens, token_dim) with a (B, max_tokens) validity mask."""
    if not grids:
        raise ValidationError("empty token batch")
    token_dim = grids[0].token_dim
    tokens = np.zeros((len(grids), max_tokens, token_dim))
    mask = np.zeros((len(grids), max_tokens), dtype=bool)
    for row, grid in enumerate(grids):
        if grid.token_dim != token_dim:
            raise ValidationError("grids in one batch must share a token dim")
        if grid.n_tokens > max_tokens:
            raise ValidationError(f"{grid.n_tokens} tokens exceed the maximum of {max_tokens}")
        tokens[row, : grid.n_tokens] = grid.tokens
        mask[row, : grid.n_tokens] = grid.token_mask()
    return tokens, mask


def frames_to_tokens_mask(frame_mask: np.ndarray, patch_size: int) -> np.ndarray:
    """Per-frame boolean mask -> padded per-frame mask usable on patchified tokens."""
    pad = (-frame_mask.shape[0]) % patch_size
    return np.concatenate([frame_mask.astype(bool), np.zeros(pad, dtype=bool)])

