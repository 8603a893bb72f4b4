# src/nn/weights_io.py
"""
"ICIW" weight files.

    magic "ICIW" | u32 version | u32 descriptor length | descriptor (UTF-8 JSON)
    | u32 tensor count | per tensor: u32 name length, name bytes, u32 rank,
      u32 dims[rank], float32 payload

All integers and floats are little-endian. The descriptor carries the
architecture (N_ICI, layer dims) so loaders can refuse incompatible files.
"""

import json
import struct
from collections import OrderedDict
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from src.errors import FormatError
from src.io_utils import ByteReader, atomic_write_bytes, read_bytes

MAGIC = b"ICIW"
VERSION = 1


def encode_weights(tensors: Mapping[str, np.ndarray], descriptor: Optional[dict] = None) -> bytes:
    descriptor_bytes = json.dumps(descriptor or {}, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(descriptor_bytes)), descriptor_bytes]
    parts.append(struct.pack("<I", len(tensors)))
    for name, array in tensors.items():
        array = np.asarray(array)
        name_bytes = name.encode("utf-8")
        parts.append(struct.pack("<I", len(name_bytes)) + name_bytes)
        parts.append(struct.pack(f"<I{array.ndim}I", array.ndim, *array.shape))
        parts.append(np.ascontiguousarray(array, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_weights(payload: bytes) -> Tuple["OrderedDict[str, np.ndarray]", Dict]:
    reader = ByteReader(payload, "weight file")
    if reader.take(4) != MAGIC:
        raise FormatError("not an ICIW weight file (bad magic)")
    version = reader.u32()
    if version != VERSION:
        raise FormatError(f"unsupported ICIW version {version} (expected {VERSION})")
    descriptor = json.loads(reader.take(reader.u32()).decode("utf-8"))

    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for _ in range(reader.u32()):
        name = reader.take(reader.u32()).decode("utf-8")
        rank = reader.u32()
        dims = tuple(reader.u32() for _ in range(rank))
        tensors[name] = reader.array("<f4", dims).astype(np.float32)
    reader.finish()
    return tensors, descriptor


def save_weights(path: str, tensors: Mapping[str, np.ndarray], descriptor: Optional[dict] = None) -> None:
    atomic_write_bytes(path, encode_weights(tensors, descriptor))


def load_weights(path: str) -> Tuple["OrderedDict[str, np.ndarray]", Dict]:
    return decode_weights(read_bytes(path, "weights"))
