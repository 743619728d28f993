"""
FSPM checkpoint codec for ModelParams.

Little-endian layout:
    magic "FSPM" | u32 version=1 | u64 vector length | length × f64
    u32 entry count | per entry: u16 name length, name bytes, u64 offset, u8 rank, rank × u64 dims
"""
import struct
from pathlib import Path
from typing import Union

import numpy as np

from ..errors import FormatError
from .model import LayoutEntry, ModelParams

MAGIC = b"FSPM"
VERSION = 1


def encode_params(params: ModelParams) -> bytes:
    parts = [MAGIC, struct.pack("<IQ", VERSION, len(params.values))]
    parts.append(params.values.astype("<f8").tobytes())
    parts.append(struct.pack("<I", len(params.layout)))
    for entry in params.layout:
        name = entry.name.encode("utf-8")
        parts.append(struct.pack("<H", len(name)))
        parts.append(name)
        parts.append(struct.pack("<QB", entry.offset, len(entry.shape)))
        parts.append(struct.pack(f"<{len(entry.shape)}Q", *entry.shape))
    return b"".join(parts)


class _Reader:
    def __init__(self, payload: bytes):
        self.payload = payload
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.payload):
            raise FormatError(f"truncated checkpoint while reading {what}", self.pos)
        chunk = self.payload[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_params(payload: bytes) -> ModelParams:
    reader = _Reader(payload)
    if reader.take(4, "magic") != MAGIC:
        raise FormatError("bad checkpoint magic, expected b'FSPM'", 0)
    version_at = reader.pos
    version, length = reader.unpack("<IQ", "header")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", version_at)
    values = np.frombuffer(reader.take(8 * length, "parameter vector"), dtype="<f8").astype(np.float64)

    (count,) = reader.unpack("<I", "layout entry count")
    layout = []
    for _ in range(count):
        entry_at = reader.pos
        (name_len,) = reader.unpack("<H", "layout name length")
        try:
            name = reader.take(name_len, "layout name").decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("layout name is not valid UTF-8", entry_at)
        offset, rank = reader.unpack("<QB", "layout entry")
        dims = reader.unpack(f"<{rank}Q", "layout dims")
        layout.append(LayoutEntry(name=name, offset=int(offset), shape=tuple(int(d) for d in dims)))
    if reader.pos != len(payload):
        raise FormatError(f"{len(payload) - reader.pos} trailing bytes after layout table", reader.pos)
    return ModelParams(values=values, layout=tuple(layout))


def save_params(params: ModelParams, path: Union[str, Path]) -> None:
    Path(path).write_bytes(encode_params(params))


def load_params(path: Union[str, Path]) -> ModelParams:
    return decode_params(Path(path).read_bytes())
