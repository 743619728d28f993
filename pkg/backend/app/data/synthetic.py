"""Deterministic synthetic image classes: one smooth Gaussian blob template per class plus pixel noise."""
from typing import Tuple

import numpy as np

from .dataset import Dataset

BACKGROUND = 40.0
# closest pair of 16x16 templates sits about 5 noise standard deviations apart:
# linearly separable to within a few percent, but not trivially
PEAK = 24.0
NOISE = 25


def class_template(k: int, n_classes: int, height: int, width: int) -> np.ndarray:
    """
    Blob for class ``k``. Centres sit on the vertical midline so horizontal
    flips preserve the class; classes differ in vertical position and scale.
    """
    cy = (height - 1) * (k + 1) / (n_classes + 1)
    cx = (width - 1) / 2.0
    sigma = max(height, width) * (0.08 + 0.04 * (k % 3))
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma ** 2))
    return BACKGROUND + PEAK * blob


def gen_synthetic(
    n_classes: int,
    per_class: int,
    channels: int,
    height: int,
    width: int,
    seed: int,
) -> Dataset:
    if min(n_classes, per_class, channels, height, width) < 1:
        raise ValueError("all synthetic dataset counts must be positive")
    rng = np.random.default_rng(seed)
    templates = np.stack([class_template(k, n_classes, height, width) for k in range(n_classes)])

    labels = np.repeat(np.arange(n_classes, dtype=np.int64), per_class)
    labels = labels[rng.permutation(len(labels))]
    base = templates[labels][:, np.newaxis, :, :].repeat(channels, axis=1)
    noise = rng.integers(-NOISE, NOISE, size=base.shape, endpoint=True)
    images = np.clip(np.rint(base) + noise, 0, 255).astype(np.uint8)
    names = tuple(f"class_{k}" for k in range(n_classes))
    return Dataset(images=images, labels=labels, class_names=names)


def split_seeds(seed: int) -> Tuple[int, int]:
    """Independent (train, test) generator seeds derived from one user seed."""
    train, test = np.random.SeedSequence(seed).spawn(2)
    return int(train.generate_state(1, np.uint64)[0]), int(test.generate_state(1, np.uint64)[0])


def gen_synthetic_splits(
    n_classes: int,
    per_class: int,
    test_per_class: int,
    channels: int,
    height: int,
    width: int,
    seed: int,
) -> Tuple[Dataset, Dataset]:
    train_seed, test_seed = split_seeds(seed)
    train = gen_synthetic(n_classes, per_class, channels, height, width, train_seed)
    test = gen_synthetic(n_classes, test_per_class, channels, height, width, test_seed)
    return train, test
