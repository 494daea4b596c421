"""Versioned binary checkpoint container.

Layout (all integers little-endian)::

    magic      8 bytes  b"PAIRDISC"
    version    u32
    meta_len   u64, followed by meta_len bytes of UTF-8 JSON
    count      u32
    count x:   name_len u32, name bytes, rank u32, rank x u64 dims,
               value float64[prod(dims)], rms float64[prod(dims)]

Gradients are not stored; a loaded store starts with zero gradients.
"""
import json
import struct
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

from .errors import CheckpointError
from .params import ParameterStore

MAGIC = b"PAIRDISC"
FORMAT_VERSION = 1

_LE_F64 = np.dtype("<f8")


def save_checkpoint(path: Union[str, Path], store: ParameterStore, metadata: Dict[str, Any]) -> Path:
    path = Path(path)
    meta = json.dumps(metadata, sort_keys=True).encode("utf-8")
    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<Q", len(meta)), meta,
              struct.pack("<I", len(store))]
    for param in store:
        name = param.name.encode("utf-8")
        chunks.append(struct.pack("<I", len(name)))
        chunks.append(name)
        chunks.append(struct.pack("<I", param.value.ndim))
        chunks.append(struct.pack(f"<{param.value.ndim}Q", *param.value.shape))
        chunks.append(param.value.astype(_LE_F64, copy=False).tobytes(order="C"))
        chunks.append(param.rms.astype(_LE_F64, copy=False).tobytes(order="C"))
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    tmp.replace(path)
    return path


class _Reader:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path: Union[str, Path]) -> Tuple[ParameterStore, Dict[str, Any]]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    reader = _Reader(data, path)
    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: not a pairdisc checkpoint")
    (version,) = reader.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (meta_len,) = reader.unpack("<Q")
    try:
        metadata = json.loads(reader.take(meta_len).decode("utf-8"))
    except ValueError as e:
        raise CheckpointError(f"{path}: corrupt metadata block") from e

    store = ParameterStore()
    (count,) = reader.unpack("<I")
    for _ in range(count):
        (name_len,) = reader.unpack("<I")
        name = reader.take(name_len).decode("utf-8")
        (rank,) = reader.unpack("<I")
        dims = reader.unpack(f"<{rank}Q")
        size = int(np.prod(dims)) if rank else 1
        value = np.frombuffer(reader.take(8 * size), dtype=_LE_F64).astype(np.float64).reshape(dims)
        rms = np.frombuffer(reader.take(8 * size), dtype=_LE_F64).astype(np.float64).reshape(dims)
        store.add(name, value, rms)
    if reader.pos != len(data):
        raise CheckpointError(f"{path}: trailing bytes after last parameter")
    return store.freeze(), metadata
