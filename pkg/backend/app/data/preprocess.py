"""
Training-time image pipeline: random crop, horizontal flip, scale to [0, 1],
per-channel standardization. Evaluation uses a deterministic crop and no flip.
"""
from typing import Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..errors import OptionError

CLIP = 10.0


class PreprocessOpts(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    crop: Optional[Tuple[int, int]] = None  # None keeps the full image
    flip_prob: float = Field(0.5, ge=0, le=1)
    standardize: bool = True
    replicate_channels: int = Field(1, ge=1)
    eval_crop: Literal["center", "random"] = "center"

    def output_shape(self, image_shape: Tuple[int, int, int]) -> Tuple[int, int, int]:
        c = image_shape[0]
        hc, wc = self.crop_size(image_shape)
        return c * self.replicate_channels, hc, wc

    def crop_size(self, image_shape: Tuple[int, int, int]) -> Tuple[int, int]:
        _, h, w = image_shape
        if self.crop is None:
            return h, w
        hc, wc = self.crop
        if hc < 1 or wc < 1 or hc > h or wc > w:
            raise OptionError(f"crop {hc}×{wc} does not fit image {h}×{w}")
        return hc, wc


def hflip(image: np.ndarray) -> np.ndarray:
    return image[..., ::-1]


def _finish(
    patch: np.ndarray,
    opts: PreprocessOpts,
    mean: Optional[np.ndarray],
    std: Optional[np.ndarray],
) -> np.ndarray:
    x = patch.astype(np.float64) / 255.0
    if opts.standardize:
        if mean is None or std is None:
            raise OptionError("standardize requires dataset mean and std")
        mean = np.asarray(mean, dtype=np.float64)[:, np.newaxis, np.newaxis]
        std = np.asarray(std, dtype=np.float64)[:, np.newaxis, np.newaxis]
        x = np.clip((x - mean) / std, -CLIP, CLIP)
    if opts.replicate_channels > 1:
        x = np.tile(x, (opts.replicate_channels, 1, 1))
    return np.ascontiguousarray(x)


def preprocess(
    image: np.ndarray,
    opts: PreprocessOpts,
    rng: np.random.Generator,
    mean: Optional[np.ndarray] = None,
    std: Optional[np.ndarray] = None,
    flip: Optional[bool] = None,
) -> np.ndarray:
    """
    Random crop, optional flip, /255, optional standardization.

    Always draws three uniforms (top, left, flip) from ``rng`` so the stream
    advances identically whatever the options. ``flip`` forces the decision.
    """
    if image.ndim != 3:
        raise OptionError(f"expected a C×H×W image, got shape {image.shape}")
    _, h, w = image.shape
    hc, wc = opts.crop_size(image.shape)
    u_top, u_left, u_flip = rng.random(3)
    top = min(int(u_top * (h - hc + 1)), h - hc)
    left = min(int(u_left * (w - wc + 1)), w - wc)
    draw = u_flip < opts.flip_prob
    patch = image[:, top:top + hc, left:left + wc]
    do_flip = draw if flip is None else flip
    if do_flip:
        patch = hflip(patch)
    return _finish(patch, opts, mean, std)


def preprocess_eval(
    image: np.ndarray,
    opts: PreprocessOpts,
    mean: Optional[np.ndarray] = None,
    std: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Centre crop, no flip."""
    if image.ndim != 3:
        raise OptionError(f"expected a C×H×W image, got shape {image.shape}")
    _, h, w = image.shape
    hc, wc = opts.crop_size(image.shape)
    top = (h - hc) // 2
    left = (w - wc) // 2
    return _finish(image[:, top:top + hc, left:left + wc], opts, mean, std)


def preprocess_split(
    images: np.ndarray,
    opts: PreprocessOpts,
    mean: Optional[np.ndarray],
    std: Optional[np.ndarray],
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Stack a whole split for evaluation; ``random`` eval crops need ``rng`` and never flip."""
    if opts.eval_crop == "random":
        if rng is None:
            raise OptionError("random evaluation crops need an rng stream")
        no_flip = opts.model_copy(update={"flip_prob": 0.0})
        rows = [preprocess(img, no_flip, rng, mean, std) for img in images]
    else:
        rows = [preprocess_eval(img, opts, mean, std) for img in images]
    if not rows:
        return np.zeros((0,) + opts.output_shape(images.shape[1:]), dtype=np.float64)
    return np.stack(rows)
