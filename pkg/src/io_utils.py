# src/io_utils.py
import os
import struct
import tempfile

import numpy as np

from src.errors import FormatError


def atomic_write_bytes(path: str, payload: bytes) -> None:
    """Write `payload` to a temp file next to `path`, then rename it into place."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp_path, path)
    except OSError as e:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise RuntimeError(f"❌ Failed to write {path}: {e}") from e


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


class ByteReader:
    """Sequential little-endian reader over an in-memory binary file."""

    def __init__(self, payload: bytes, label: str = "file"):
        self.payload = payload
        self.label = label
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.payload):
            raise FormatError(f"{self.label} truncated at byte {self.offset} (needed {n} more)")
        chunk = self.payload[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def u32(self, count: int = 1):
        values = struct.unpack(f"<{count}I", self.take(4 * count))
        return values[0] if count == 1 else values

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def array(self, dtype, shape) -> np.ndarray:
        dtype = np.dtype(dtype)
        count = int(np.prod(shape, dtype=np.int64))
        return np.frombuffer(self.take(dtype.itemsize * count), dtype=dtype).reshape(shape)

    def finish(self) -> None:
        if self.offset != len(self.payload):
            raise FormatError(f"{self.label}: {len(self.payload) - self.offset} trailing bytes")


def read_bytes(path: str, what: str) -> bytes:
    try:
        with open(path, "rb") as f:
            return f.read()
    except OSError as e:
        raise RuntimeError(f"❌ Failed to read {what} from {path}: {e}") from e
