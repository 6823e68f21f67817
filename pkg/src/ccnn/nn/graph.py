"""Sequential layer graphs, the CNN -> CCNN converter and its dilated counterpart."""
from __future__ import annotations

import struct
from dataclasses import MISSING, dataclass, fields, replace
from typing import Callable, Union

import numpy as np

from .. import sampler as _sampler
from . import functional as F
from .functional import FeatureMap, ShapeError
from .tensor import Tensor

SAMPLERS = {
    "traditional": lambda k: _sampler.traditional(k),
    "checkered": lambda k: _sampler.checkered(),
    "complement": lambda k: _sampler.complement(_sampler.checkered()),
    "complete": lambda k: _sampler.complete(k),
}


class UnsupportedLayerError(ValueError):
    def __init__(self, index: int, message: str):
        super().__init__(f"layer {index}: {message}")
        self.index = index


@dataclass(frozen=True)
class Conv:
    out: int
    k: int = 3
    stride: int = 1
    pad: int = 0
    dil: int = 1
    km: int = 1
    sampler: str = "traditional"
    tail: int = 0
    bias: bool = True


@dataclass(frozen=True)
class BatchNorm:
    c: int
    eps: float = 1e-5
    momentum: float = 0.1


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class MaxPool:
    k: int = 2
    stride: int = 2
    pad: int = 0
    dil: int = 1
    sampler: str = "traditional"
    tail: int = 0


@dataclass(frozen=True)
class Dropout:
    p: float = 0.5


@dataclass(frozen=True)
class MeanSubmaps:
    pass


@dataclass(frozen=True)
class GlobalPool3d:
    mode: str = "avg"


@dataclass(frozen=True)
class Linear:
    in_features: int
    out: int


Layer = Union[Conv, BatchNorm, ReLU, MaxPool, Dropout, MeanSubmaps, GlobalPool3d, Linear]

_KEYWORDS = {
    Conv: "conv",
    BatchNorm: "bn",
    ReLU: "relu",
    MaxPool: "maxpool",
    Dropout: "dropout",
    MeanSubmaps: "mean_submaps",
    GlobalPool3d: "gpool3d",
    Linear: "linear",
}
_BY_KEYWORD = {v: k for k, v in _KEYWORDS.items()}
# text keys that differ from the dataclass field name
_ALIASES = {Linear: {"in": "in_features"}}


def layer_to_line(layer: Layer) -> str:
    cls = type(layer)
    rev = {v: k for k, v in _ALIASES.get(cls, {}).items()}
    parts = [_KEYWORDS[cls]]
    for f in fields(layer):
        value = getattr(layer, f.name)
        if f.default is not MISSING and value == f.default and f.name not in ("k", "stride", "pad", "dil"):
            continue
        if isinstance(value, bool):
            value = int(value)
        parts.append(f"{rev.get(f.name, f.name)}={value}")
    return " ".join(parts)


def parse_layer(line: str) -> Layer:
    tokens = line.split()
    cls = _BY_KEYWORD.get(tokens[0])
    if cls is None:
        raise ValueError(f"unknown layer type {tokens[0]!r}")
    aliases = _ALIASES.get(cls, {})
    types = {f.name: f.type for f in fields(cls)}
    kwargs = {}
    for tok in tokens[1:]:
        key, sep, raw = tok.partition("=")
        if not sep:
            raise ValueError(f"expected key=value, got {tok!r}")
        name = aliases.get(key, key)
        if name not in types:
            raise ValueError(f"{tokens[0]} has no field {key!r}")
        kind = types[name]
        if kind == "int":
            kwargs[name] = int(raw)
        elif kind == "float":
            kwargs[name] = float(raw)
        elif kind == "bool":
            kwargs[name] = raw.lower() in ("1", "true", "yes")
        else:
            kwargs[name] = raw
    return cls(**kwargs)


@dataclass
class LayerGraph:
    """Layers in order, with one parameter dict (and buffer dict) per layer."""

    layers: list
    params: list
    buffers: list

    @classmethod
    def build(cls, layers, in_channels: int, seed: int = 0) -> "LayerGraph":
        """Initialise parameters (fan-in scaled uniform) from a seeded generator."""
        rng = np.random.default_rng(seed)
        params, buffers = [], []
        channels = in_channels
        for i, layer in enumerate(layers):
            p, b = {}, {}
            if isinstance(layer, Conv):
                shape = (layer.out, channels, layer.k, layer.k) if layer.km == 1 else (layer.out, channels, layer.km, layer.k, layer.k)
                bound = 1.0 / np.sqrt(np.prod(shape[1:]))
                p["weight"] = Tensor(rng.uniform(-bound, bound, shape), requires_grad=True)
                if layer.bias:
                    p["bias"] = Tensor(rng.uniform(-bound, bound, layer.out), requires_grad=True)
                channels = layer.out
            elif isinstance(layer, BatchNorm):
                if layer.c != channels:
                    raise ShapeError(f"layer {i}: batchnorm for {layer.c} channels after {channels}")
                p["gamma"] = Tensor(np.ones(layer.c), requires_grad=True)
                p["beta"] = Tensor(np.zeros(layer.c), requires_grad=True)
                b["running_mean"] = np.zeros(layer.c)
                b["running_var"] = np.ones(layer.c)
            elif isinstance(layer, Linear):
                bound = 1.0 / np.sqrt(layer.in_features)
                p["weight"] = Tensor(rng.uniform(-bound, bound, (layer.out, layer.in_features)), requires_grad=True)
                p["bias"] = Tensor(rng.uniform(-bound, bound, layer.out), requires_grad=True)
                channels = layer.out
            params.append(p)
            buffers.append(b)
        return cls(list(layers), params, buffers)

    def parameters(self) -> list[Tensor]:
        return [t for p in self.params for _, t in sorted(p.items())]

    def named_parameters(self):
        for i, p in enumerate(self.params):
            for name, t in sorted(p.items()):
                yield f"{i}.{name}", t

    def parameter_count(self) -> int:
        return sum(t.size for t in self.parameters())

    def copy(self) -> "LayerGraph":
        return LayerGraph(
            list(self.layers),
            [{k: Tensor(t.data.copy(), requires_grad=t.requires_grad) for k, t in p.items()} for p in self.params],
            [{k: v.copy() for k, v in b.items()} for b in self.buffers],
        )

    def zero_grad(self):
        for t in self.parameters():
            t.grad = None

    def to_text(self) -> str:
        return "".join(layer_to_line(layer) + "\n" for layer in self.layers)

    def __len__(self):
        return len(self.layers)


def parse_graph_text(text: str) -> list:
    layers = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            layers.append(parse_layer(line))
        except (ValueError, TypeError) as exc:
            raise ValueError(f"line {line_no}: {exc}") from None
    return layers


# ----------------------------------------------------------- parameter blob

_MAGIC = b"CCNNPRM1"


def params_to_bytes(g: LayerGraph) -> bytes:
    """Little-endian blob: magic, u32 entry count, then per entry
    u32 layer, u16 name length, name, u8 ndim, u32 dims, float64 values."""
    entries = []
    for i, (p, b) in enumerate(zip(g.params, g.buffers)):
        for name, t in sorted(p.items()):
            entries.append((i, name, t.data))
        for name, arr in sorted(b.items()):
            entries.append((i, name, arr))
    out = [_MAGIC, struct.pack("<I", len(entries))]
    for i, name, arr in entries:
        raw = name.encode("utf-8")
        out.append(struct.pack("<IH", i, len(raw)))
        out.append(raw)
        out.append(struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(out)


def _expected_shape(layer, name: str, shape: tuple) -> bool:
    if isinstance(layer, Conv):
        ndim = 4 if layer.km == 1 else 5
        if name == "weight":
            return len(shape) == ndim and shape[0] == layer.out and shape[-2:] == (layer.k, layer.k) and (layer.km == 1 or shape[2] == layer.km)
        return name == "bias" and layer.bias and shape == (layer.out,)
    if isinstance(layer, BatchNorm):
        return name in ("gamma", "beta", "running_mean", "running_var") and shape == (layer.c,)
    if isinstance(layer, Linear):
        if name == "weight":
            return shape == (layer.out, layer.in_features)
        return name == "bias" and shape == (layer.out,)
    return False


def params_from_bytes(blob: bytes, layers) -> LayerGraph:
    try:
        return _params_from_bytes(blob, layers)
    except struct.error as exc:
        raise ValueError(f"truncated parameter blob: {exc}") from None


def _params_from_bytes(blob: bytes, layers) -> LayerGraph:
    if blob[: len(_MAGIC)] != _MAGIC:
        raise ValueError("not a parameter blob (bad magic)")
    pos = len(_MAGIC)
    (count,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    params = [{} for _ in layers]
    buffers = [{} for _ in layers]
    for _ in range(count):
        i, n = struct.unpack_from("<IH", blob, pos)
        pos += 6
        name = blob[pos : pos + n].decode("utf-8")
        pos += n
        (ndim,) = struct.unpack_from("<B", blob, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        size = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(blob, dtype="<f8", count=size, offset=pos).astype(np.float64).reshape(shape)
        pos += 8 * size
        if i >= len(layers):
            raise ValueError(f"blob refers to layer {i} but the graph has {len(layers)}")
        if not _expected_shape(layers[i], name, shape):
            raise ValueError(f"layer {i}: unexpected parameter {name!r} with shape {shape}")
        if name.startswith("running_"):
            buffers[i][name] = arr
        else:
            params[i][name] = Tensor(arr, requires_grad=True)
    if pos != len(blob):
        raise ValueError(f"{len(blob) - pos} trailing bytes in parameter blob")
    return LayerGraph(list(layers), params, buffers)


def save(g: LayerGraph, text_path, blob_path) -> None:
    with open(text_path, "w", encoding="utf-8") as fh:
        fh.write(g.to_text())
    with open(blob_path, "wb") as fh:
        fh.write(params_to_bytes(g))


def load(text_path, blob_path) -> LayerGraph:
    with open(text_path, encoding="utf-8") as fh:
        layers = parse_graph_text(fh.read())
    with open(blob_path, "rb") as fh:
        return params_from_bytes(fh.read(), layers)


# ------------------------------------------------------------------ forward

Hook = Callable[[int, Layer, object], object]


def _pad_odd(x: FeatureMap, fill: float) -> FeatureMap:
    """Grow odd spatial extents by one row/column at the bottom/right."""
    _, _, _, h, w = x.shape
    eh, ew = h % 2, w % 2
    if not (eh or ew):
        return x
    data = x.tensor
    y = np.pad(data.data, ((0, 0), (0, 0), (0, 0), (0, eh), (0, ew)), constant_values=fill)

    def back(g):
        return (g[:, :, :, :h, :w],)

    metas = tuple(replace(m, height=h + eh, width=w + ew) for m in x.metas)
    return FeatureMap(Tensor.make(y, (data,), back), metas)


def apply_layer(
    i: int,
    layer: Layer,
    params: dict,
    buffers: dict,
    x,
    training: bool,
    rng: np.random.Generator | None = None,
):
    if isinstance(layer, (Conv, MaxPool, BatchNorm, MeanSubmaps, GlobalPool3d, ReLU, Dropout)) and not isinstance(x, FeatureMap):
        raise ShapeError(f"layer {i} ({_KEYWORDS[type(layer)]}) needs a feature map input")
    if isinstance(layer, Conv):
        w = params["weight"]
        if w.shape[1] != x.shape[1]:
            raise ShapeError(f"layer {i} (conv): expects {w.shape[1]} input channels, got {x.shape[1]}")
        if layer.km > 1:
            return F.conv3d_submap(x, w, params.get("bias"), layer.pad)
        if layer.sampler != "traditional":
            if layer.stride != 2:
                raise UnsupportedLayerError(i, f"sampler {layer.sampler!r} needs stride 2")
            x = _pad_odd(x, 0.0)
            return F.sampled_conv(x, w, params.get("bias"), SAMPLERS[layer.sampler](2), layer.pad, layer.dil)
        if layer.stride == 2:
            x = _pad_odd(x, 0.0)
        return F.conv2d(x, w, params.get("bias"), layer.stride, layer.pad, layer.dil, layer.tail)
    if isinstance(layer, MaxPool):
        if layer.sampler != "traditional":
            if layer.stride != 2:
                raise UnsupportedLayerError(i, f"sampler {layer.sampler!r} needs stride 2")
            x = _pad_odd(x, -np.inf)
            return F.sampled_maxpool(x, SAMPLERS[layer.sampler](2), layer.k, layer.pad, layer.dil)
        if layer.stride == 2:
            x = _pad_odd(x, -np.inf)
        return F.maxpool(x, layer.k, layer.stride, layer.pad, layer.dil, layer.tail)
    if isinstance(layer, BatchNorm):
        if x.shape[1] != layer.c:
            raise ShapeError(f"layer {i} (bn): expects {layer.c} channels, got {x.shape[1]}")
        return F.batchnorm(
            x,
            params["gamma"],
            params["beta"],
            layer.eps,
            training,
            buffers["running_mean"],
            buffers["running_var"],
            layer.momentum,
        )
    if isinstance(layer, ReLU):
        return F.relu(x)
    if isinstance(layer, Dropout):
        return F.dropout(x, layer.p, rng, training)
    if isinstance(layer, MeanSubmaps):
        return F.mean_over_submaps(x)
    if isinstance(layer, GlobalPool3d):
        return F.global_pool3d(x, layer.mode)
    if isinstance(layer, Linear):
        if isinstance(x, FeatureMap):
            b, c, m, h, w = x.shape
            if m != 1:
                raise ShapeError(f"layer {i} (linear): got {m} submaps, reduce them first")
            x = x.tensor.reshape(b, c * h * w)
        if x.shape[1] != layer.in_features:
            raise ShapeError(f"layer {i} (linear): expects {layer.in_features} inputs, got {x.shape[1]}")
        return F.linear(x, params["weight"], params["bias"])
    raise UnsupportedLayerError(i, f"unknown layer {layer!r}")


def forward(
    g: LayerGraph,
    x: FeatureMap | np.ndarray,
    training: bool = False,
    seed: int | None = 0,
    hook: Hook | None = None,
    stop: int | None = None,
):
    """Run the layers in order.

    ``hook(i, layer, value)`` sees (and may replace) the output of layer ``i``.
    ``stop`` ends the pass after that many layers and returns the intermediate
    value.  ``seed`` drives dropout masks in training mode.
    """
    if not isinstance(x, FeatureMap):
        x = FeatureMap.from_images(x)
    rng = np.random.default_rng(seed)
    value = x
    end = len(g.layers) if stop is None else stop
    for i in range(end):
        layer = g.layers[i]
        value = apply_layer(i, layer, g.params[i], g.buffers[i], value, training, rng)
        if hook is not None:
            value = hook(i, layer, value)
    return value


def activations(g: LayerGraph, x, training: bool = False, seed: int | None = 0) -> list:
    out = []

    def keep(i, layer, value):
        out.append(value)
        return value

    forward(g, x, training, seed, hook=keep)
    return out


# -------------------------------------------------------------- converters


def _check_strides(g: LayerGraph):
    for i, layer in enumerate(g.layers):
        if isinstance(layer, (Conv, MaxPool)) and layer.stride not in (1, 2):
            raise UnsupportedLayerError(i, f"stride {layer.stride} is not supported (only 1 or 2)")
        if isinstance(layer, (Conv, MaxPool)) and layer.sampler != "traditional":
            raise UnsupportedLayerError(i, "layer is already multisampled")


def convert_to_ccnn(g: LayerGraph, sampler: str = "checkered") -> LayerGraph:
    """Replace every stride-2 conv/pool with its multisampled version.

    Parameters are copied unchanged; a submap average is inserted before the
    first linear layer unless the submaps are already reduced there.
    """
    if sampler not in SAMPLERS or sampler == "traditional":
        raise ValueError(f"unknown sampler {sampler!r}")
    _check_strides(g)
    out = g.copy()
    layers = []
    for layer in out.layers:
        if isinstance(layer, (Conv, MaxPool)) and layer.stride == 2 and getattr(layer, "km", 1) == 1:
            layer = replace(layer, sampler=sampler)
        layers.append(layer)
    out.layers = layers
    for i, layer in enumerate(layers):
        if isinstance(layer, (MeanSubmaps, GlobalPool3d)):
            break
        if isinstance(layer, Linear):
            out.layers.insert(i, MeanSubmaps())
            out.params.insert(i, {})
            out.buffers.insert(i, {})
            break
    return out


def dilation_equivalent(g: LayerGraph) -> LayerGraph:
    """Remove subsampling: stride-2 layers become stride 1 and every later
    spatial layer has its dilation and padding multiplied by the accumulated
    factor, so the map keeps full resolution."""
    _check_strides(g)
    out = g.copy()
    factor = 1
    layers = []
    for layer in out.layers:
        if isinstance(layer, (Conv, MaxPool)) and getattr(layer, "km", 1) == 1:
            dil = layer.dil * factor
            changes = dict(dil=dil, pad=layer.pad * factor)
            if layer.stride == 2:
                changes["stride"] = 1
                # windows of odd reach need one extra (dilated) element past the border
                if (layer.dil * (layer.k - 1)) % 2:
                    changes["tail"] = factor
                factor *= 2
            layer = replace(layer, **changes)
        layers.append(layer)
    out.layers = layers
    return out


def to_complete_multisampling(g: LayerGraph) -> LayerGraph:
    return convert_to_ccnn(g, sampler="complete")
