"""Resolution and complexity calculators.

Analytic factors are exact: every value is a rational times an optional
factor of sqrt(2), so table comparisons are equality checks.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from .nn import graph as G
from .nn.functional import ShapeError, out_extent


def resolution_after(r: int, k: int, d: int, n: int, steps: int) -> int:
    """Spatial resolution after ``steps`` layers keeping n of every k**d elements."""
    if k < 1 or not 1 <= n <= k**d or steps < 0:
        raise ValueError(f"invalid multisampling parameters k={k} d={d} n={n} steps={steps}")
    value = Fraction(r)
    for step in range(steps):
        value = value * n / k**d
        if value.denominator != 1:
            raise ValueError(f"resolution {r} is not divisible at step {step + 1}")
    return int(value)


@dataclass(frozen=True)
class HalfPow2:
    """``mantissa * sqrt(2) ** root2`` with ``root2`` in {0, 1}."""

    mantissa: Fraction
    root2: int = 0

    @classmethod
    def of(cls, mantissa, half_exp: int = 0) -> "HalfPow2":
        """``mantissa * 2 ** (half_exp / 2)`` in normal form."""
        m = Fraction(mantissa) * Fraction(2) ** (half_exp // 2)
        return cls(m, half_exp % 2)

    def __float__(self):
        return float(self.mantissa) * (2**0.5) ** self.root2

    def __mul__(self, other):
        other = other if isinstance(other, HalfPow2) else HalfPow2(Fraction(other))
        return HalfPow2.of(self.mantissa * other.mantissa, self.root2 + other.root2)

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = HalfPow2(Fraction(other))
        if not isinstance(other, HalfPow2):
            return NotImplemented
        return self.mantissa == other.mantissa and self.root2 == other.root2

    def __hash__(self):
        return hash((self.mantissa, self.root2))

    def __str__(self):
        base = str(self.mantissa)
        return base if not self.root2 else f"{base}*sqrt2"


@dataclass(frozen=True)
class ComplexityProfile:
    scheme: str
    channel_rule: str
    s: int
    memory_factor: HalfPow2
    compute_factor: HalfPow2


SCHEMES = ("traditional", "checkered", "dilated")
CHANNEL_RULES = ("double", "constant", "sqrt2")

# (memory, compute) per subsampling step, as (base, half-power-of-two exponent)
_TABLE = {
    ("traditional", "double"): ((Fraction(1, 2), 0), (1, 0)),
    ("checkered", "double"): ((1, 0), (2, 0)),
    ("dilated", "double"): ((2, 0), (4, 0)),
    ("traditional", "constant"): ((Fraction(1, 4), 0), (Fraction(1, 4), 0)),
    ("checkered", "constant"): ((Fraction(1, 2), 0), (Fraction(1, 2), 0)),
    ("dilated", "constant"): ((1, 0), (1, 0)),
    ("checkered", "sqrt2"): ((1, -1), (1, 0)),
}


def complexity_profile(scheme: str, channel_rule: str, s: int) -> ComplexityProfile:
    """Memory and compute of a layer preceded by ``s`` subsampling steps, relative to s=0."""
    if s < 0:
        raise ValueError(f"s must be non-negative, got {s}")
    if scheme not in SCHEMES or channel_rule not in CHANNEL_RULES:
        raise ValueError(f"unknown scheme/channel rule {scheme!r}/{channel_rule!r}")
    key = (scheme, channel_rule)
    if key not in _TABLE:
        raise NotImplementedError(f"channel rule {channel_rule!r} is only defined for the checkered scheme")
    (mb, me), (cb, ce) = _TABLE[key]
    return ComplexityProfile(
        scheme,
        channel_rule,
        s,
        HalfPow2.of(Fraction(mb) ** s, me * s),
        HalfPow2.of(Fraction(cb) ** s, ce * s),
    )


# ----------------------------------------------------------------- dry run


@dataclass(frozen=True)
class LayerCost:
    index: int
    kind: str
    out_shape: tuple
    macs: int
    activations: int


def measured_cost(g: "G.LayerGraph | list", input_shape) -> list[LayerCost]:
    """Count multiply-accumulates and output elements per layer from shapes alone.

    ``input_shape`` is (B, C, H, W) or (B, C, M, H, W).  Bias, normalisation
    and pooling arithmetic are not counted as MACs.
    """
    layers = g.layers if isinstance(g, G.LayerGraph) else list(g)
    shape = tuple(input_shape)
    if len(shape) == 4:
        shape = (shape[0], shape[1], 1, shape[2], shape[3])
    if len(shape) != 5:
        raise ShapeError(f"input shape must be 4-D or 5-D, got {input_shape}")
    out = []
    flat = None  # (B, features) once the map has been reduced
    for i, layer in enumerate(layers):
        macs = 0
        kind = G._KEYWORDS[type(layer)]
        if isinstance(layer, G.Linear):
            if flat is None:
                b, c, m, h, w = shape
                if m != 1:
                    raise ShapeError(f"layer {i} (linear): got {m} submaps")
                flat = (b, c * h * w)
            if flat[1] != layer.in_features:
                raise ShapeError(f"layer {i} (linear): expects {layer.in_features} inputs, got {flat[1]}")
            macs = flat[0] * layer.in_features * layer.out
            flat = (flat[0], layer.out)
            out.append(LayerCost(i, kind, flat, macs, flat[0] * flat[1]))
            continue
        if flat is not None:
            if not isinstance(layer, (G.ReLU, G.Dropout)):
                raise ShapeError(f"layer {i} ({kind}) needs a feature map")
            out.append(LayerCost(i, kind, flat, 0, flat[0] * flat[1]))
            continue
        b, c, m, h, w = shape
        if isinstance(layer, (G.Conv, G.MaxPool)):
            n = 1
            if layer.stride == 2:
                h, w = h + h % 2, w + w % 2
            if layer.sampler != "traditional":
                n = int(G.SAMPLERS[layer.sampler](2).n)
            ho = out_extent(h + layer.tail, layer.k, layer.stride, layer.pad, layer.dil)
            wo = out_extent(w + layer.tail, layer.k, layer.stride, layer.pad, layer.dil)
            km = getattr(layer, "km", 1)
            if km > m:
                raise ShapeError(f"layer {i} (conv): submap kernel {km} exceeds {m} submaps")
            if isinstance(layer, G.Conv):
                if km > 1:
                    ho = out_extent(h, layer.k, 1, layer.pad, 1)
                    wo = out_extent(w, layer.k, 1, layer.pad, 1)
                mo = m * n - km + 1
                shape = (b, layer.out, mo, ho, wo)
                macs = b * layer.out * mo * ho * wo * c * km * layer.k * layer.k
            else:
                shape = (b, c, m * n, ho, wo)
        elif isinstance(layer, G.BatchNorm):
            if layer.c != c:
                raise ShapeError(f"layer {i} (bn): expects {layer.c} channels, got {c}")
        elif isinstance(layer, G.MeanSubmaps):
            shape = (b, c, 1, h, w)
        elif isinstance(layer, G.GlobalPool3d):
            flat = (b, c)
            out.append(LayerCost(i, kind, flat, 0, b * c))
            continue
        out.append(LayerCost(i, kind, shape, macs, int(np.prod(shape))))
    return out


# --------------------------------------------------------- reference graphs


def reference_layers(scheme: str, channel_rule: str, stages: int, base_channels: int = 4) -> list:
    """A stack of ``stages + 1`` measured 3x3 convs separated by subsampling convs.

    Returns the layer list and, for every stage, the index of its measured
    (stride-1) layer, as ``(layers, measured)``.
    """
    layers, measured = [], []
    channels = base_channels
    for s in range(stages + 1):
        measured.append(len(layers))
        layers.append(G.Conv(channels, k=3, pad=1))
        if s == stages:
            break
        if channel_rule == "double":
            nxt = channels * 2
        elif channel_rule == "constant":
            nxt = channels
        elif channel_rule == "sqrt2":
            nxt = channels * 2 if s % 2 else channels  # exact sqrt2 growth every second step
        else:
            raise ValueError(channel_rule)
        layers.append(G.Conv(nxt, k=3, stride=2, pad=1))
        channels = nxt
    g = G.LayerGraph(layers, [{} for _ in layers], [{} for _ in layers])
    if scheme == "checkered":
        g = G.convert_to_ccnn(g)
    elif scheme == "dilated":
        g = G.dilation_equivalent(g)
    elif scheme != "traditional":
        raise ValueError(scheme)
    return g.layers, measured


def measured_profile(scheme: str, channel_rule: str, stages: int, size: int = 64, base_channels: int = 4) -> list[tuple[Fraction, Fraction]]:
    """(memory ratio, compute ratio) of each stage's measured layer relative to stage 0."""
    layers, measured = reference_layers(scheme, channel_rule, stages, base_channels)
    costs = measured_cost(layers, (1, base_channels, size, size))
    first = costs[measured[0]]
    return [
        (Fraction(costs[i].activations, first.activations), Fraction(costs[i].macs, first.macs))
        for i in measured
    ]
