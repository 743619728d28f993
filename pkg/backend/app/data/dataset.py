"""
In-memory image classification dataset and its FSDS file codec.

FSDS (little-endian, one file per split):
    magic "FSDS" | u32 version=1 | u32 count | u16 C | u16 H | u16 W | u16 class count
    class-name table: per class u16 length + UTF-8 bytes
    per example: u16 label + C·H·W raw u8 pixels
"""
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np

from ..errors import FormatError

logger = logging.getLogger(__name__)

MAGIC = b"FSDS"
VERSION = 1
HEADER = struct.Struct("<4sIIHHHH")
STD_FLOOR = 1e-3


def channel_stats(images: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and std of pixels scaled to [0, 1]; std floored at 1e-3."""
    if len(images) == 0:
        channels = images.shape[1]
        return np.zeros(channels), np.ones(channels)
    scaled = images.astype(np.float64) / 255.0
    mean = scaled.mean(axis=(0, 2, 3))
    std = np.maximum(scaled.std(axis=(0, 2, 3)), STD_FLOOR)
    return mean, std


@dataclass(frozen=True, eq=False)
class Dataset:
    images: np.ndarray  # N×C×H×W uint8
    labels: np.ndarray  # N int64
    class_names: Tuple[str, ...]
    mean: np.ndarray = field(init=False)
    std: np.ndarray = field(init=False)

    def __post_init__(self):
        images = np.ascontiguousarray(self.images, dtype=np.uint8)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if images.ndim != 4:
            raise FormatError(f"images must be N×C×H×W, got shape {images.shape}")
        if len(images) != len(labels):
            raise FormatError(f"{len(images)} images but {len(labels)} labels")
        names = tuple(self.class_names)
        if len(labels) and (labels.min() < 0 or labels.max() >= len(names)):
            raise FormatError(f"labels must lie in [0, {len(names)})")
        images.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_names", names)
        mean, std = channel_stats(images)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def image_shape(self) -> Tuple[int, int, int]:
        return tuple(int(d) for d in self.images.shape[1:])

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(images=self.images[idx], labels=self.labels[idx], class_names=self.class_names)


def encode_dataset(dataset: Dataset) -> bytes:
    c, h, w = dataset.image_shape
    parts = [HEADER.pack(MAGIC, VERSION, len(dataset), c, h, w, dataset.num_classes)]
    for name in dataset.class_names:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
    record = np.dtype([("label", "<u2"), ("pixels", "u1", (c * h * w,))])
    rows = np.empty(len(dataset), dtype=record)
    rows["label"] = dataset.labels
    rows["pixels"] = dataset.images.reshape(len(dataset), c * h * w)
    parts.append(rows.tobytes())
    return b"".join(parts)


def decode_dataset(payload: bytes) -> Dataset:
    if len(payload) < HEADER.size:
        raise FormatError(f"truncated header: {len(payload)} bytes, need {HEADER.size}", len(payload))
    magic, version, count, c, h, w, n_classes = HEADER.unpack_from(payload, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if min(c, h, w) == 0:
        raise FormatError(f"image extents must be positive, got {c}×{h}×{w}", 12)

    pos = HEADER.size
    names = []
    for k in range(n_classes):
        if pos + 2 > len(payload):
            raise FormatError(f"truncated class-name table at class {k}", pos)
        (length,) = struct.unpack_from("<H", payload, pos)
        pos += 2
        if pos + length > len(payload):
            raise FormatError(f"truncated class name {k}", pos)
        try:
            names.append(payload[pos:pos + length].decode("utf-8"))
        except UnicodeDecodeError:
            raise FormatError(f"class name {k} is not valid UTF-8", pos)
        pos += length

    record_size = 2 + c * h * w
    expected = pos + count * record_size
    if len(payload) != expected:
        what = "truncated payload" if len(payload) < expected else "trailing bytes after payload"
        raise FormatError(
            f"{what}: header declares {count} examples of {record_size} bytes, "
            f"expected {expected} bytes total, got {len(payload)}",
            min(len(payload), expected),
        )
    record = np.dtype([("label", "<u2"), ("pixels", "u1", (c * h * w,))])
    rows = np.frombuffer(payload, dtype=record, count=count, offset=pos)
    labels = rows["label"].astype(np.int64)
    bad = np.flatnonzero(labels >= n_classes)
    if len(bad):
        i = int(bad[0])
        raise FormatError(f"example {i} has label {labels[i]} but only {n_classes} classes", pos + i * record_size)
    images = rows["pixels"].reshape(count, c, h, w).copy()
    return Dataset(images=images, labels=labels, class_names=tuple(names))


def save_dataset(dataset: Dataset, path: Union[str, Path]) -> None:
    path = Path(path)
    path.write_bytes(encode_dataset(dataset))
    logger.debug("wrote %d examples to %s", len(dataset), path)


def load_dataset(path: Union[str, Path]) -> Dataset:
    dataset = decode_dataset(Path(path).read_bytes())
    logger.debug("loaded %d examples (%s) from %s", len(dataset), "x".join(map(str, dataset.image_shape)), path)
    return dataset
