"""Little-endian binary containers: motion files (PKMO), caption files, sampler traces (PKTR).

The named-tensor block writer/reader is shared with checkpoints (PKCK).
"""

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Dict, List, Sequence, Union

import numpy as np

from ..exceptions import DataError
from .motion import MotionSequence, builtin_schema

MOTION_MAGIC = b"PKMO"
TRACE_MAGIC = b"PKTR"
CONTAINER_VERSION = 1

PathLike = Union[str, Path]


class ByteReader:
    """Cursor over a byte buffer that raises DataError on truncation."""

    def __init__(self, data: bytes, source: str):
        self.data = data
        self.source = source
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DataError(f"{self.source}: truncated at byte {self.pos} (wanted {n} more)")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def text(self) -> str:
        length = self.u32()
        try:
            return self.take(length).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DataError(f"{self.source}: invalid UTF-8 string ({exc})")

    def float32(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * count), dtype="<f4").astype(np.float64)

    def expect_magic(self, magic: bytes) -> None:
        found = self.take(len(magic))
        if found != magic:
            raise DataError(f"{self.source}: bad magic {found!r}, expected {magic!r}")

    def expect_version(self) -> int:
        version = self.u32()
        if version != CONTAINER_VERSION:
            raise DataError(f"{self.source}: unsupported version {version}")
        return version

    def at_end(self) -> bool:
        return self.pos == len(self.data)


def _u32(value: int) -> bytes:
    return struct.pack("<I", value)


def _text(value: str) -> bytes:
    encoded = value.encode("utf-8")
    return _u32(len(encoded)) + encoded


def _float32(array: np.ndarray) -> bytes:
    return np.ascontiguousarray(array, dtype="<f4").tobytes()


def _read_file(path: PathLike) -> ByteReader:
    try:
        return ByteReader(Path(path).read_bytes(), str(path))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}")


def _write_file(path: PathLike, payload: bytes) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_bytes(payload)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}")


def write_motion_file(path: PathLike, sequences: Sequence[MotionSequence]) -> None:
    """Write sequences sharing one schema as a PKMO file (values stored as float32)."""
    if not sequences:
        raise DataError(f"refusing to write an empty motion file to {path}")
    schema = sequences[0].schema
    parts = [MOTION_MAGIC, _u32(CONTAINER_VERSION), _text(schema.name), _u32(len(sequences))]
    for seq in sequences:
        if seq.schema != schema:
            raise DataError(f"{path}: sequences mix schemas {schema.name} and {seq.schema.name}")
        parts.append(_u32(seq.n_frames))
        parts.append(_float32(seq.data))
    _write_file(path, b"".join(parts))


def read_motion_file(path: PathLike) -> List[MotionSequence]:
    reader = _read_file(path)
    reader.expect_magic(MOTION_MAGIC)
    reader.expect_version()
    schema = builtin_schema(reader.text())
    count = reader.u32()
    sequences = []
    for _ in range(count):
        n_frames = reader.u32()
        values = reader.float32(n_frames * schema.total_dim)
        try:
            sequences.append(MotionSequence(schema, values.reshape(n_frames, schema.total_dim)))
        except ValueError as exc:
            raise DataError(f"{path}: {exc}")
    if not reader.at_end():
        raise DataError(f"{path}: trailing bytes after {count} sequences")
    return sequences


def write_captions(path: PathLike, captions: Sequence[str]) -> None:
    """u32 count, then length-prefixed UTF-8 captions."""
    _write_file(path, _u32(len(captions)) + b"".join(_text(c) for c in captions))


def read_captions(path: PathLike) -> List[str]:
    reader = _read_file(path)
    captions = [reader.text() for _ in range(reader.u32())]
    if not reader.at_end():
        raise DataError(f"{path}: trailing bytes after captions")
    return captions


@dataclass(frozen=True)
class TraceStep:
    """Latent after one reverse step from t to t_prev."""
    t: int
    t_prev: int
    latent: np.ndarray


def write_trace(path: PathLike, steps: Sequence[TraceStep]) -> None:
    parts = [TRACE_MAGIC, _u32(CONTAINER_VERSION), _u32(len(steps))]
    for step in steps:
        latent = np.asarray(step.latent)
        parts += [_u32(step.t), _u32(step.t_prev), _u32(latent.ndim)]
        parts += [_u32(dim) for dim in latent.shape]
        parts.append(_float32(latent))
    _write_file(path, b"".join(parts))


def read_trace(path: PathLike) -> List[TraceStep]:
    reader = _read_file(path)
    reader.expect_magic(TRACE_MAGIC)
    reader.expect_version()
    steps = []
    for _ in range(reader.u32()):
        t, t_prev, ndim = reader.u32(), reader.u32(), reader.u32()
        shape = tuple(reader.u32() for _ in range(ndim))
        latent = reader.float32(int(np.prod(shape))).reshape(shape)
        steps.append(TraceStep(t=t, t_prev=t_prev, latent=latent))
    return steps


def write_named_arrays(handle: BinaryIO, arrays: Dict[str, np.ndarray]) -> None:
    """u32 count, then per array: name, u32 ndim, u32 dims, float32 payload."""
    handle.write(_u32(len(arrays)))
    for name, array in arrays.items():
        array = np.asarray(array)
        handle.write(_text(name))
        handle.write(_u32(array.ndim))
        for dim in array.shape:
            handle.write(_u32(dim))
        handle.write(_float32(array))


def read_named_arrays(reader: ByteReader) -> Dict[str, np.ndarray]:
    arrays = {}
    for _ in range(reader.u32()):
        name = reader.text()
        shape = tuple(reader.u32() for _ in range(reader.u32()))
        count = int(np.prod(shape)) if shape else 1
        arrays[name] = reader.float32(count).reshape(shape)
    return arrays
