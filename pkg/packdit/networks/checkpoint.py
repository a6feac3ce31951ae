"""Self-describing PKCK checkpoints: configs, schedule, vocabulary, norm stats and float32 tensors."""

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np
import torch
from pydantic import ValidationError as PydanticValidationError

from ..core.container import CONTAINER_VERSION, ByteReader, read_named_arrays, write_named_arrays
from ..core.diffusion import NoiseSchedule, schedule_from_params
from ..core.motion import NormStats, builtin_schema
from ..exceptions import ConfigError, DataError
from ..models.config import CodecConfig, DiTConfig
from ..models.motion import MotionSchema
from .dit import PackDiT
from .text_codec import ProjectionModel, TextCodec, Vocab

CHECKPOINT_MAGIC = b"PKCK"
CODEC_PREFIX = "codec."


@dataclass
class CheckpointContents:
    """Everything needed to sample without external configuration."""
    model: PackDiT
    codec: TextCodec
    schedule: NoiseSchedule
    stats: NormStats
    schema: MotionSchema
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def dit_config(self) -> DiTConfig:
        return self.model.config

    @property
    def codec_config(self) -> CodecConfig:
        return self.codec.config

    @property
    def vocab(self) -> Vocab:
        return self.codec.vocab


def build_model(
    dit_config: DiTConfig, codec_config: CodecConfig, vocab: Vocab
) -> Tuple[PackDiT, TextCodec]:
    """Fresh (PackDiT, TextCodec) pair; P maps the codec embed dim to Dim_P."""
    if dit_config.text_latent_dim != codec_config.dim_p:
        raise ConfigError(
            f"text latent dim {dit_config.text_latent_dim} != projection dim {codec_config.dim_p}"
        )
    if dit_config.max_text_tokens < codec_config.latent_tokens:
        raise ConfigError(
            f"max_text_tokens {dit_config.max_text_tokens} < latent tokens {codec_config.latent_tokens}"
        )
    projection = ProjectionModel(codec_config.embed_dim, codec_config.dim_p)
    return PackDiT(dit_config, projection=projection), TextCodec(vocab, codec_config)


def save_checkpoint(
    path: Union[str, Path],
    contents: CheckpointContents,
) -> None:
    header = {
        "dit": contents.dit_config.model_dump(),
        "schedule": contents.schedule.params(),
        "codec": contents.codec_config.model_dump(),
        "vocab": list(contents.vocab.tokens),
        "vocab_hash": contents.vocab.hash(),
        "schema": contents.schema.name,
        "metadata": contents.metadata,
    }
    arrays: Dict[str, np.ndarray] = {}
    for name, tensor in contents.model.state_dict().items():
        arrays[name] = tensor.detach().cpu().numpy()
    for name, tensor in contents.codec.state_dict().items():
        arrays[CODEC_PREFIX + name] = tensor.detach().cpu().numpy()
    arrays["norm.mean"] = contents.stats.mean
    arrays["norm.std"] = contents.stats.std

    buffer = io.BytesIO()
    encoded = json.dumps(header, sort_keys=True).encode("utf-8")
    buffer.write(CHECKPOINT_MAGIC)
    buffer.write(struct.pack("<I", CONTAINER_VERSION))
    buffer.write(struct.pack("<I", len(encoded)))
    buffer.write(encoded)
    write_named_arrays(buffer, arrays)
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_bytes(buffer.getvalue())
    except OSError as exc:
        raise DataError(f"cannot write checkpoint {path}: {exc}")


def read_checkpoint_header(path: Union[str, Path]) -> Dict[str, Any]:
    """Config block only; cheap enough for ``inspect``."""
    header, _ = _read(path, with_arrays=False)
    return header


def _read(path: Union[str, Path], with_arrays: bool = True):
    try:
        reader = ByteReader(Path(path).read_bytes(), str(path))
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}")
    reader.expect_magic(CHECKPOINT_MAGIC)
    reader.expect_version()
    try:
        header = json.loads(reader.take(reader.u32()).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: corrupt config block ({exc})")
    arrays = read_named_arrays(reader) if with_arrays else {}
    return header, arrays


def load_checkpoint(path: Union[str, Path]) -> CheckpointContents:
    header, arrays = _read(path)
    try:
        dit_config = DiTConfig(**header["dit"])
        codec_config = CodecConfig(**header["codec"])
        vocab = Vocab(tuple(header["vocab"]))
        schedule = schedule_from_params(header["schedule"])
        schema = builtin_schema(header["schema"])
    except KeyError as exc:
        raise DataError(f"{path}: config block lacks {exc}")
    except PydanticValidationError as exc:
        raise DataError(f"{path}: invalid stored config ({exc})")
    if vocab.hash() != header.get("vocab_hash"):
        raise DataError(f"{path}: vocabulary hash mismatch")

    model, codec = build_model(dit_config, codec_config, vocab)
    try:
        stats = NormStats(mean=arrays.pop("norm.mean"), std=arrays.pop("norm.std"))
    except KeyError:
        raise DataError(f"{path}: normalization stats missing")
    model_state = {k: torch.from_numpy(v).float() for k, v in arrays.items() if not k.startswith(CODEC_PREFIX)}
    codec_state = {
        k[len(CODEC_PREFIX) :]: torch.from_numpy(v).float()
        for k, v in arrays.items()
        if k.startswith(CODEC_PREFIX)
    }
    try:
        model.load_state_dict(model_state, strict=True)
        codec.load_state_dict(codec_state, strict=True)
    except RuntimeError as exc:
        raise DataError(f"{path}: tensors do not match the stored config ({exc})")
    model.eval()
    codec.eval()
    return CheckpointContents(
        model=model,
        codec=codec,
        schedule=schedule,
        stats=stats,
        schema=schema,
        metadata=header.get("metadata", {}),
    )


def checkpoint_tensor_names(path: Union[str, Path]) -> Dict[str, Tuple[int, ...]]:
    """Name -> shape of every stored tensor."""
    _, arrays = _read(path)
    return {name: tuple(array.shape) for name, array in arrays.items()}
