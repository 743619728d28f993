"""
Layer-composed classifiers over a flat parameter vector.

A ``ModelSpec`` lists layers; ``ModelParams`` holds every trainable value in
one float64 vector plus a layout table, so the federation can average models
as plain vectors.
"""
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import LayoutError, ShapeError, SpecError, UsageError
from ..kernels import tensor as K

logger = logging.getLogger(__name__)

Shape = Tuple[int, ...]


@dataclass(frozen=True)
class Conv3x3:
    out_channels: int


@dataclass(frozen=True)
class MaxPool2:
    pass


@dataclass(frozen=True)
class Activation:
    kind: str = "relu"


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Dense:
    units: int


Layer = Union[Conv3x3, MaxPool2, Activation, Flatten, Dense]


@dataclass(frozen=True)
class ModelSpec:
    input_shape: Shape
    layers: Tuple[Layer, ...]
    num_classes: int
    name: str = "custom"


@dataclass(frozen=True)
class LayoutEntry:
    name: str
    offset: int
    shape: Shape

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))


Layout = Tuple[LayoutEntry, ...]


@dataclass(frozen=True, eq=False)
class ModelParams:
    values: np.ndarray
    layout: Layout

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "layout", tuple(self.layout))
        check_layout(self.layout, len(values))

    def __len__(self) -> int:
        return len(self.values)

    def replace(self, values: np.ndarray) -> "ModelParams":
        """Same layout, new vector."""
        return ModelParams(values=values, layout=self.layout)


@dataclass
class ForwardCache:
    """Per-layer state saved by ``forward``; only valid for its (params, batch)."""
    spec: ModelSpec
    params: ModelParams
    entries: List[object] = field(default_factory=list)
    logits_shape: Shape = ()


# ---------------------------------------------------------------------------
# Static shape checking and layout
# ---------------------------------------------------------------------------

def infer_shapes(spec: ModelSpec) -> List[Shape]:
    """Per-example output shape of every layer; raises SpecError if layers do not compose."""
    shape: Shape = tuple(int(d) for d in spec.input_shape)
    if not shape or any(d <= 0 for d in shape):
        raise SpecError(f"input shape must have positive extents, got {spec.input_shape}")
    if spec.num_classes < 1:
        raise SpecError(f"num_classes must be >= 1, got {spec.num_classes}")
    shapes = []
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Conv3x3):
            if len(shape) != 3:
                raise SpecError(f"layer {i} conv3x3 needs a C×H×W input, got {shape}")
            if layer.out_channels < 1:
                raise SpecError(f"layer {i} conv3x3 needs >= 1 output channel")
            shape = (layer.out_channels, shape[1], shape[2])
        elif isinstance(layer, MaxPool2):
            if len(shape) != 3 or shape[1] % 2 or shape[2] % 2:
                raise SpecError(f"layer {i} maxpool2 needs a C×H×W input with even H, W, got {shape}")
            shape = (shape[0], shape[1] // 2, shape[2] // 2)
        elif isinstance(layer, Activation):
            if layer.kind not in K.ACTIVATIONS:
                raise SpecError(f"layer {i} has unknown activation {layer.kind!r}")
        elif isinstance(layer, Flatten):
            shape = (int(np.prod(shape)),)
        elif isinstance(layer, Dense):
            if len(shape) != 1:
                raise SpecError(f"layer {i} dense needs a flat input, got {shape}; add flatten first")
            if layer.units < 1:
                raise SpecError(f"layer {i} dense needs >= 1 unit")
            shape = (layer.units,)
        else:
            raise SpecError(f"layer {i} has unsupported type {type(layer).__name__}")
        shapes.append(shape)
    if shape != (spec.num_classes,):
        raise SpecError(f"final layer emits shape {shape}, expected ({spec.num_classes},)")
    return shapes


def _param_shapes(spec: ModelSpec) -> List[Tuple[str, Shape, int]]:
    """(name, shape, fan_in) for every parameter tensor in layer order."""
    out = []
    shape: Shape = tuple(spec.input_shape)
    for i, (layer, next_shape) in enumerate(zip(spec.layers, infer_shapes(spec))):
        if isinstance(layer, Conv3x3):
            fan_in = shape[0] * 9
            out.append((f"{i}.conv.weight", (layer.out_channels, shape[0], 3, 3), fan_in))
            out.append((f"{i}.conv.bias", (layer.out_channels,), 0))
        elif isinstance(layer, Dense):
            out.append((f"{i}.dense.weight", (shape[0], layer.units), shape[0]))
            out.append((f"{i}.dense.bias", (layer.units,), 0))
        shape = next_shape
    return out


def build_layout(spec: ModelSpec) -> Layout:
    entries = []
    offset = 0
    for name, shape, _ in _param_shapes(spec):
        entry = LayoutEntry(name=name, offset=offset, shape=shape)
        entries.append(entry)
        offset += entry.size
    return tuple(entries)


def count_params(spec: ModelSpec) -> int:
    return sum(entry.size for entry in build_layout(spec))


def check_layout(layout: Layout, length: int) -> None:
    expected = 0
    names = set()
    for entry in layout:
        if entry.offset != expected:
            raise LayoutError(f"layout entry {entry.name!r} at offset {entry.offset}, expected {expected}")
        if entry.name in names:
            raise LayoutError(f"duplicate layout entry {entry.name!r}")
        names.add(entry.name)
        expected += entry.size
    if expected != length:
        raise LayoutError(f"layout covers {expected} values but the vector has {length}")


def require_layout(params: ModelParams, spec: ModelSpec) -> None:
    if params.layout != build_layout(spec):
        raise LayoutError(f"parameter layout does not match model spec {spec.name!r}")


# ---------------------------------------------------------------------------
# Reference architectures
# ---------------------------------------------------------------------------

def mlp_spec(input_shape: Sequence[int], num_classes: int, hidden: int = 64) -> ModelSpec:
    input_shape = tuple(int(d) for d in input_shape)
    layers: List[Layer] = [Flatten()] if len(input_shape) > 1 else []
    layers += [Dense(hidden), Activation("relu"), Dense(num_classes)]
    return ModelSpec(input_shape=input_shape, layers=tuple(layers), num_classes=num_classes, name="mlp")


def small_cnn_spec(input_shape: Sequence[int], num_classes: int) -> ModelSpec:
    layers = (
        Conv3x3(8), Activation("relu"), MaxPool2(),
        Conv3x3(16), Activation("relu"), MaxPool2(),
        Flatten(), Dense(num_classes),
    )
    return ModelSpec(input_shape=tuple(int(d) for d in input_shape), layers=layers,
                     num_classes=num_classes, name="small_cnn")


MODEL_BUILDERS = {
    "mlp": mlp_spec,
    "small_cnn": small_cnn_spec,
}


def build_spec(name: str, input_shape: Sequence[int], num_classes: int) -> ModelSpec:
    if name not in MODEL_BUILDERS:
        raise SpecError(f"unknown model {name!r}; expected one of {sorted(MODEL_BUILDERS)}")
    spec = MODEL_BUILDERS[name](input_shape, num_classes)
    infer_shapes(spec)
    return spec


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

def init_params(spec: ModelSpec, seed: int) -> ModelParams:
    """He-normal weights (std = sqrt(2/fan_in)), zero biases; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    layout = build_layout(spec)
    values = np.zeros(sum(e.size for e in layout), dtype=np.float64)
    for (name, shape, fan_in), entry in zip(_param_shapes(spec), layout):
        if fan_in:
            draws = rng.standard_normal(entry.size) * math.sqrt(2.0 / fan_in)
            values[entry.offset:entry.offset + entry.size] = draws
    return ModelParams(values=values, layout=layout)


def zero_params(spec: ModelSpec) -> ModelParams:
    layout = build_layout(spec)
    return ModelParams(values=np.zeros(sum(e.size for e in layout)), layout=layout)


def unflatten(params: ModelParams) -> "OrderedDict[str, np.ndarray]":
    check_layout(params.layout, len(params.values))
    return OrderedDict(
        (e.name, params.values[e.offset:e.offset + e.size].reshape(e.shape)) for e in params.layout
    )


def flatten(tensors: Dict[str, np.ndarray], layout: Layout) -> ModelParams:
    if set(tensors) != {e.name for e in layout}:
        raise LayoutError(
            f"tensor names {sorted(tensors)} do not match layout {[e.name for e in layout]}"
        )
    values = np.empty(sum(e.size for e in layout), dtype=np.float64)
    for e in layout:
        t = np.asarray(tensors[e.name], dtype=np.float64)
        if t.shape != e.shape:
            raise LayoutError(f"tensor {e.name!r} has shape {t.shape}, layout expects {e.shape}")
        values[e.offset:e.offset + e.size] = t.reshape(-1)
    return ModelParams(values=values, layout=layout)


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

def forward(spec: ModelSpec, params: ModelParams, batch: np.ndarray) -> Tuple[np.ndarray, ForwardCache]:
    require_layout(params, spec)
    x = K.as_tensor(batch)
    if x.shape[1:] != tuple(spec.input_shape) or x.shape[0] < 1:
        raise ShapeError(f"batch shape {x.shape} does not match model input b×{tuple(spec.input_shape)}")

    tensors = unflatten(params)
    cache = ForwardCache(spec=spec, params=params)
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Conv3x3):
            x, conv_cache = K.conv2d_forward(x, tensors[f"{i}.conv.weight"], tensors[f"{i}.conv.bias"])
            cache.entries.append(conv_cache)
        elif isinstance(layer, MaxPool2):
            x, mask = K.maxpool2(x)
            cache.entries.append(mask)
        elif isinstance(layer, Activation):
            cache.entries.append(x)
            x = K.activation(x, layer.kind)
        elif isinstance(layer, Flatten):
            cache.entries.append(x.shape)
            x = x.reshape(x.shape[0], -1)
        elif isinstance(layer, Dense):
            cache.entries.append(x)
            x = K.matmul(x, tensors[f"{i}.dense.weight"]) + tensors[f"{i}.dense.bias"]
    cache.logits_shape = x.shape
    return x, cache


def backward(spec: ModelSpec, params: ModelParams, cache: ForwardCache, grad_logits: np.ndarray) -> np.ndarray:
    """Gradient of sum(logits * grad_logits) w.r.t. the flat parameter vector."""
    if cache is None or cache.params is not params or cache.spec != spec:
        raise UsageError("backward needs the cache produced by forward on these params")
    if len(cache.entries) != len(spec.layers):
        raise UsageError("forward cache is incomplete")
    g = K.as_tensor(grad_logits)
    if g.shape != cache.logits_shape:
        raise ShapeError(f"grad_logits shape {g.shape} does not match logits {cache.logits_shape}")

    tensors = unflatten(params)
    grads: Dict[str, np.ndarray] = {}
    for i in reversed(range(len(spec.layers))):
        layer, saved = spec.layers[i], cache.entries[i]
        if isinstance(layer, Conv3x3):
            g, grads[f"{i}.conv.weight"], grads[f"{i}.conv.bias"] = K.conv2d_backward(saved, g)
        elif isinstance(layer, MaxPool2):
            g = K.maxpool2_backward(saved, g)
        elif isinstance(layer, Activation):
            g = K.activation_backward(saved, g, layer.kind)
        elif isinstance(layer, Flatten):
            g = g.reshape(saved)
        elif isinstance(layer, Dense):
            grads[f"{i}.dense.weight"] = K.matmul(saved.T, g)
            grads[f"{i}.dense.bias"] = g.sum(axis=0)
            g = K.matmul(g, tensors[f"{i}.dense.weight"].T)

    out = np.empty(len(params.values), dtype=np.float64)
    for e in params.layout:
        out[e.offset:e.offset + e.size] = grads[e.name].reshape(-1)
    return out


def describe(spec: ModelSpec) -> str:
    parts = []
    for layer in spec.layers:
        if isinstance(layer, Conv3x3):
            parts.append(f"conv3x3({layer.out_channels})")
        elif isinstance(layer, MaxPool2):
            parts.append("pool")
        elif isinstance(layer, Activation):
            parts.append(layer.kind)
        elif isinstance(layer, Flatten):
            parts.append("flatten")
        elif isinstance(layer, Dense):
            parts.append(f"dense({layer.units})")
    return f"{spec.name}[{'x'.join(str(d) for d in spec.input_shape)}]: " + "-".join(parts)
