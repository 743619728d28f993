"""
Dense float64 kernels the model layers are built from.

A Tensor is a contiguous row-major ``numpy.ndarray`` of float64. Spatial
kernels accept a single image ``C×H×W`` or a batch ``B×C×H×W``; a single
image is treated as a batch of one and returned without the batch axis.
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError, UsageError

Tensor = np.ndarray

ACTIVATIONS = ("relu", "silu")


def as_tensor(values) -> Tensor:
    """Copy-free float64 view when possible, contiguous in row-major order."""
    return np.ascontiguousarray(values, dtype=np.float64)


def _batched(x: Tensor, name: str) -> Tuple[Tensor, bool]:
    if x.ndim == 3:
        return x[np.newaxis], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"{name} must be C×H×W or B×C×H×W, got shape {x.shape}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    return a @ b


@dataclass(frozen=True)
class ConvCache:
    padded_windows: Tensor  # B×C_in×H×W×3×3
    kernels: Tensor
    squeeze: bool


def _check_conv(x: Tensor, kernels: Tensor, bias: Tensor) -> None:
    if kernels.ndim != 4 or kernels.shape[2:] != (3, 3):
        raise ShapeError(f"kernels must be C_out×C_in×3×3, got {kernels.shape}")
    if x.shape[1] != kernels.shape[1]:
        raise ShapeError(
            f"conv2d channel mismatch: input has {x.shape[1]}, kernels expect {kernels.shape[1]}"
        )
    if bias.shape != (kernels.shape[0],):
        raise ShapeError(f"bias must have shape ({kernels.shape[0]},), got {bias.shape}")


def conv2d_forward(input: Tensor, kernels: Tensor, bias: Tensor) -> Tuple[Tensor, ConvCache]:
    """3×3 cross-correlation, zero padding 1, stride 1, plus per-channel bias."""
    x, squeeze = _batched(as_tensor(input), "conv2d input")
    kernels = as_tensor(kernels)
    bias = as_tensor(bias)
    _check_conv(x, kernels, bias)

    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    windows = sliding_window_view(padded, (3, 3), axis=(2, 3))
    out = np.einsum("bchwkl,ockl->bohw", windows, kernels)
    out += bias[np.newaxis, :, np.newaxis, np.newaxis]
    out = np.ascontiguousarray(out)
    cache = ConvCache(padded_windows=windows, kernels=kernels, squeeze=squeeze)
    return (out[0] if squeeze else out), cache


def conv2d(input: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    out, _ = conv2d_forward(input, kernels, bias)
    return out


def conv2d_backward(cache: ConvCache, grad_output: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
    """Returns (grad_input, grad_kernels, grad_bias) for the cached forward."""
    if cache is None:
        raise UsageError("conv2d_backward called without a forward cache")
    g, _ = _batched(as_tensor(grad_output), "conv2d upstream gradient")
    windows = cache.padded_windows
    expected = (windows.shape[0], cache.kernels.shape[0]) + windows.shape[2:4]
    if g.shape != expected:
        raise ShapeError(f"upstream gradient shape {g.shape} does not match output {expected}")

    grad_kernels = np.einsum("bchwkl,bohw->ockl", windows, g)
    grad_bias = g.sum(axis=(0, 2, 3))

    # full correlation of the upstream gradient with the flipped kernels
    g_windows = sliding_window_view(np.pad(g, ((0, 0), (0, 0), (1, 1), (1, 1))), (3, 3), axis=(2, 3))
    flipped = cache.kernels[:, :, ::-1, ::-1]
    grad_input = np.ascontiguousarray(np.einsum("bohwkl,ockl->bchw", g_windows, flipped))

    if cache.squeeze:
        grad_input = grad_input[0]
    return grad_input, np.ascontiguousarray(grad_kernels), np.ascontiguousarray(grad_bias)


@dataclass(frozen=True)
class PoolMask:
    argmax: np.ndarray  # B×C×H/2×W/2, index 0..3 of the row-major window position
    input_shape: Tuple[int, ...]
    squeeze: bool


def maxpool2(input: Tensor) -> Tuple[Tensor, PoolMask]:
    """2×2 non-overlapping max pooling; ties go to the first element in row-major order."""
    x, squeeze = _batched(as_tensor(input), "maxpool2 input")
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2 needs even spatial extents, got {h}×{w}")
    windows = x.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    windows = windows.reshape(b, c, h // 2, w // 2, 4)
    argmax = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, argmax[..., np.newaxis], axis=-1)[..., 0]
    out = np.ascontiguousarray(out)
    mask = PoolMask(argmax=argmax, input_shape=x.shape, squeeze=squeeze)
    return (out[0] if squeeze else out), mask


def maxpool2_backward(mask: PoolMask, grad: Tensor) -> Tensor:
    if mask is None:
        raise UsageError("maxpool2_backward called without a pooling mask")
    g, _ = _batched(as_tensor(grad), "maxpool2 upstream gradient")
    if g.shape != mask.argmax.shape:
        raise ShapeError(f"upstream gradient shape {g.shape} does not match pooled {mask.argmax.shape}")
    b, c, h, w = mask.input_shape
    routed = np.zeros(g.shape + (4,), dtype=np.float64)
    np.put_along_axis(routed, mask.argmax[..., np.newaxis], g[..., np.newaxis], axis=-1)
    routed = routed.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    grad_input = np.ascontiguousarray(routed.reshape(b, c, h, w))
    return grad_input[0] if mask.squeeze else grad_input


def _sigmoid(x: Tensor) -> Tensor:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _check_kind(kind: str) -> None:
    if kind not in ACTIVATIONS:
        raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def activation(x: Tensor, kind: str) -> Tensor:
    _check_kind(kind)
    x = as_tensor(x)
    if kind == "relu":
        return np.maximum(x, 0.0)
    return x * _sigmoid(x)


def activation_backward(x: Tensor, grad: Tensor, kind: str) -> Tensor:
    """Gradient w.r.t. the activation input ``x``; relu'(0) is 0."""
    _check_kind(kind)
    x = as_tensor(x)
    grad = as_tensor(grad)
    if x.shape != grad.shape:
        raise ShapeError(f"activation gradient shape {grad.shape} does not match input {x.shape}")
    if kind == "relu":
        return np.where(x > 0.0, grad, 0.0)
    s = _sigmoid(x)
    return grad * (s * (1.0 + x * (1.0 - s)))


def log_softmax(logits: Tensor) -> Tensor:
    logits = as_tensor(logits)
    if logits.ndim != 2:
        raise ShapeError(f"log_softmax expects b×n logits, got shape {logits.shape}")
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
