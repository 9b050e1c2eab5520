"""
Binary checkpoints of particle ensembles and grid densities.

Layout, all integers and floats little-endian::

    magic    5 bytes  b"MFCK1"
    version  u32      currently 1
    kind     u8       1 = ensemble, 2 = grid density
    ndim     u32
    shape    u64 * ndim
    header   ensemble: f64 t, u64 seed, u64 step, u64 labels[N]
             grid:     f64 t, f64 half_width
    payload  f64 * prod(shape), row-major

``tests/data/ensemble_fixture.mfck`` is a frozen example of this layout.
"""

import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Any

import numpy as np

from meanfieldlab.errors import (
    MagicMismatchError,
    TruncatedCheckpointError,
    VersionMismatchError,
)
from meanfieldlab.grid import GridDensity
from meanfieldlab.sde import ParticleEnsemble

MAGIC = b"MFCK1"
VERSION = 1

_PREAMBLE = struct.Struct("<5sIBI")
_ENSEMBLE_HEADER = struct.Struct("<dQQ")
_GRID_HEADER = struct.Struct("<dd")


class CheckpointKind(IntEnum):
    ENSEMBLE = 1
    GRID = 2


@dataclass(frozen=True)
class CheckpointInfo:
    """Metadata of a checkpoint, as printed by ``inspect``."""

    kind: CheckpointKind
    version: int
    shape: tuple[int, ...]
    t: float
    extra: dict[str, Any]
    nbytes: int


def encode(state: ParticleEnsemble | GridDensity) -> bytes:
    """Serialize an ensemble or a grid density; ``decode`` inverts it bit-exactly."""
    if isinstance(state, ParticleEnsemble):
        kind = CheckpointKind.ENSEMBLE
        payload = state.positions
        header = _ENSEMBLE_HEADER.pack(state.t, state.seed, state.step)
        header += np.asarray(state.labels, dtype="<u8").tobytes()
    elif isinstance(state, GridDensity):
        kind = CheckpointKind.GRID
        payload = state.values
        header = _GRID_HEADER.pack(state.t, state.half_width)
    else:
        raise TypeError(f"cannot checkpoint {type(state).__name__}")
    shape = payload.shape
    return b"".join(
        [
            _PREAMBLE.pack(MAGIC, VERSION, kind, len(shape)),
            struct.pack(f"<{len(shape)}Q", *shape),
            header,
            np.ascontiguousarray(payload, dtype="<f8").tobytes(),
        ]
    )


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = memoryview(data)
        self.offset = 0

    def take(self, size: int, what: str) -> memoryview:
        end = self.offset + size
        if end > len(self.data):
            raise TruncatedCheckpointError(
                f"checkpoint truncated in {what}: need {end} bytes, have {len(self.data)}"
            )
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, layout: struct.Struct, what: str) -> tuple[Any, ...]:
        return layout.unpack(self.take(layout.size, what))

    def array(self, count: int, dtype: str, what: str) -> np.ndarray:
        width = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(count * width, what), dtype=dtype).copy()


def _read_preamble(reader: _Reader) -> tuple[CheckpointKind, int, tuple[int, ...]]:
    if len(reader.data) < len(MAGIC) or bytes(reader.data[: len(MAGIC)]) != MAGIC:
        raise MagicMismatchError(
            f"not a checkpoint: expected magic {MAGIC!r}, got {bytes(reader.data[:5])!r}"
        )
    magic, version, kind, ndim = reader.unpack(_PREAMBLE, "preamble")
    if version != VERSION:
        raise VersionMismatchError(f"checkpoint version {version}, this build reads {VERSION}")
    try:
        kind = CheckpointKind(kind)
    except ValueError as err:
        raise MagicMismatchError(f"unknown checkpoint kind tag {kind}") from err
    shape = struct.unpack(f"<{ndim}Q", reader.take(8 * ndim, "shape"))
    return kind, version, tuple(int(s) for s in shape)


def decode(data: bytes) -> ParticleEnsemble | GridDensity:
    """Rebuild the object written by ``encode``.

    Raises
    ------
    MagicMismatchError
        The bytes do not start with ``MFCK1`` or carry an unknown kind tag.
    VersionMismatchError
        The format version is not 1.
    TruncatedCheckpointError
        The bytes end before the declared header or payload.
    """
    reader = _Reader(data)
    kind, _, shape = _read_preamble(reader)
    size = int(np.prod(shape, dtype=np.int64))
    if kind is CheckpointKind.ENSEMBLE:
        t, seed, step = reader.unpack(_ENSEMBLE_HEADER, "ensemble header")
        labels = reader.array(shape[0], "<u8", "labels").astype(np.int64)
        positions = reader.array(size, "<f8", "payload").astype(float).reshape(shape)
        return ParticleEnsemble(positions, t=t, seed=seed, step=step, labels=labels)
    t, half_width = reader.unpack(_GRID_HEADER, "grid header")
    values = reader.array(size, "<f8", "payload").astype(float).reshape(shape)
    return GridDensity(values, half_width, t)


def describe(data: bytes) -> CheckpointInfo:
    """Read the metadata without building the object."""
    reader = _Reader(data)
    kind, version, shape = _read_preamble(reader)
    if kind is CheckpointKind.ENSEMBLE:
        t, seed, step = reader.unpack(_ENSEMBLE_HEADER, "ensemble header")
        extra = {"seed": seed, "step": step}
        reader.take(8 * shape[0], "labels")
    else:
        t, half_width = reader.unpack(_GRID_HEADER, "grid header")
        extra = {"half_width": half_width}
    reader.take(8 * int(np.prod(shape, dtype=np.int64)), "payload")
    return CheckpointInfo(kind, version, shape, t, extra, len(data))


def save_checkpoint(state: ParticleEnsemble | GridDensity, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode(state))
    return path


def load_checkpoint(path: str | Path) -> ParticleEnsemble | GridDensity:
    return decode(Path(path).read_bytes())
