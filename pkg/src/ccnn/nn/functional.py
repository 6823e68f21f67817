"""Layers over submap-augmented feature maps.

Feature maps are 5-D: (batch, channels, submaps, height, width).  Every 2-D
layer runs on all submaps at once with shared parameters, i.e. as a 3-D layer
whose kernel has depth 1 along the submap axis.

Strided layers take a sampler.  For a sampler sample ``(dr, dc)`` the window
origins are ``(k*i + dr, k*j + dc)`` in padded coordinates, which is the same
as running the ordinary strided layer on the input shifted up/left by
``(dr, dc)``.  Elements shifted in from past the bottom/right border are
zero for convolutions and -inf for max-pooling.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .. import sampler as _sampler
from ..sampler import Sampler
from ..trace import SubmapMeta, canonical
from .tensor import Tensor, concat


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureMap:
    tensor: Tensor
    metas: tuple[SubmapMeta, ...]

    def __post_init__(self):
        if self.tensor.ndim != 5:
            raise ShapeError(f"feature maps are 5-D (B, C, M, H, W), got shape {self.tensor.shape}")
        if len(self.metas) != self.tensor.shape[2]:
            raise ShapeError(f"{len(self.metas)} submap metas for {self.tensor.shape[2]} submaps")

    @classmethod
    def from_images(cls, images, requires_grad: bool = False) -> "FeatureMap":
        """Wrap a (B, C, H, W) array as a single-submap feature map."""
        arr = np.asarray(images, dtype=np.float64)
        if arr.ndim != 4:
            raise ShapeError(f"expected (B, C, H, W) images, got shape {arr.shape}")
        _, _, h, w = arr.shape
        return cls(Tensor(arr[:, :, None], requires_grad=requires_grad), (SubmapMeta(0, 0, 1, h, w),))

    @property
    def shape(self) -> tuple[int, int, int, int, int]:
        return self.tensor.shape

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    def with_tensor(self, t: Tensor) -> "FeatureMap":
        return FeatureMap(t, self.metas)

    def submap(self, index: int) -> np.ndarray:
        return self.tensor.data[:, :, index]

    def index_of(self, row_offset: int, col_offset: int) -> int:
        for i, m in enumerate(self.metas):
            if (m.row_offset, m.col_offset) == (row_offset, col_offset):
                return i
        raise KeyError((row_offset, col_offset))


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


def out_extent(size: int, kernel: int, stride: int, padding: int, dilation: int) -> int:
    return (size + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


# ----------------------------------------------------------------- kernels


def _padded(x: np.ndarray, pad: tuple[int, int], extra: tuple[int, int], fill: float) -> np.ndarray:
    ph, pw = pad
    eh, ew = extra
    return np.pad(x, ((0, 0), (0, 0), (0, 0), (ph, ph + eh), (pw, pw + ew)), constant_values=fill)


def _geometry(x_shape, kernel, stride, padding, dilation, offset, out_hw, tail):
    """Output extent and the bottom/right padding needed to reach every window."""
    _, _, _, h, w = x_shape
    kh, kw = kernel
    ph, pw = padding
    dh, dw = dilation
    th, tw = tail
    if out_hw is None:
        out_hw = (out_extent(h + th, kh, stride, ph, dh), out_extent(w + tw, kw, stride, pw, dw))
    ho, wo = out_hw
    if ho < 1 or wo < 1:
        raise ShapeError(f"input {h}x{w} too small for a {kh}x{kw} window")
    need_h = offset[0] + stride * (ho - 1) + dh * (kh - 1) + 1
    need_w = offset[1] + stride * (wo - 1) + dw * (kw - 1) + 1
    extra = (max(0, need_h - (h + 2 * ph)), max(0, need_w - (w + 2 * pw)))
    return (ho, wo), extra


def _window(xp, d, a, b, m_out, ho, wo, stride, dilation, offset):
    r0 = offset[0] + a * dilation[0]
    c0 = offset[1] + b * dilation[1]
    return (
        slice(None),
        slice(None),
        slice(d, d + m_out),
        slice(r0, r0 + stride * (ho - 1) + 1, stride),
        slice(c0, c0 + stride * (wo - 1) + 1, stride),
    )


def window_conv(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding=0,
    dilation=1,
    offset=(0, 0),
    out_hw=None,
    tail=0,
) -> Tensor:
    """Cross-correlation of a 5-D input with a (O, C, km, kh, kw) kernel.

    The submap axis is never padded and never strided.  ``offset`` moves every
    window origin down/right in padded coordinates; ``tail`` adds zero rows and
    columns at the bottom/right before the output extent is computed.
    """
    o, c, km, kh, kw = weight.shape
    b_, cx, m, h, w = x.shape
    if cx != c:
        raise ShapeError(f"kernel expects {c} input channels, feature map has {cx}")
    if km > m:
        raise ShapeError(f"submap kernel extent {km} exceeds the {m} available submaps")
    padding, dilation, tail = _pair(padding), _pair(dilation), _pair(tail)
    (ho, wo), extra = _geometry(x.shape, (kh, kw), stride, padding, dilation, offset, out_hw, tail)
    xp = _padded(x.data, padding, extra, 0.0)
    m_out = m - km + 1
    wd = weight.data
    positions = [(d, a, b) for d in range(km) for a in range(kh) for b in range(kw)]

    cols = np.empty((b_, m_out, ho, wo, c, len(positions)))
    for p, (d, a, b) in enumerate(positions):
        patch = xp[_window(xp, d, a, b, m_out, ho, wo, stride, dilation, offset)]
        cols[..., p] = patch.transpose(0, 2, 3, 4, 1)
    wmat = wd.reshape(o, c, -1)
    out = np.tensordot(cols, wmat, axes=([4, 5], [1, 2]))  # (B, M', Ho, Wo, O)
    if bias is not None:
        out = out + bias.data
    out = out.transpose(0, 4, 1, 2, 3)

    xp_shape = xp.shape
    ph, pw = padding

    def back(g):
        gt = g.transpose(0, 2, 3, 4, 1)  # (B, M', Ho, Wo, O)
        gw = np.tensordot(gt, cols, axes=([0, 1, 2, 3], [0, 1, 2, 3])).reshape(wd.shape)
        gb = gt.sum(axis=(0, 1, 2, 3)) if bias is not None else None
        gcols = np.tensordot(gt, wmat, axes=([4], [0]))  # (B, M', Ho, Wo, C, P)
        gxp = np.zeros(xp_shape)
        for p, (d, a, b) in enumerate(positions):
            gxp[_window(gxp, d, a, b, m_out, ho, wo, stride, dilation, offset)] += gcols[..., p].transpose(0, 4, 1, 2, 3)
        gx = gxp[:, :, :, ph : ph + h, pw : pw + w]
        return (gx, gw, gb)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.make(out, parents, back if bias is not None else (lambda g: back(g)[:2]))


def window_maxpool(
    x: Tensor,
    kernel=2,
    stride: int = 2,
    padding=0,
    dilation=1,
    offset=(0, 0),
    out_hw=None,
    tail=0,
) -> Tensor:
    """Max over each window; padded and shifted-in elements are -inf."""
    kh, kw = _pair(kernel)
    b_, c, m, h, w = x.shape
    padding, dilation, tail = _pair(padding), _pair(dilation), _pair(tail)
    (ho, wo), extra = _geometry(x.shape, (kh, kw), stride, padding, dilation, offset, out_hw, tail)
    xp = _padded(x.data, padding, extra, -np.inf)
    positions = [(a, b) for a in range(kh) for b in range(kw)]
    stack = np.stack([xp[_window(xp, 0, a, b, m, ho, wo, stride, dilation, offset)] for a, b in positions], axis=-1)
    arg = np.argmax(stack, axis=-1)
    out = np.take_along_axis(stack, arg[..., None], axis=-1)[..., 0]
    if not np.isfinite(out).all():
        raise ShapeError("a pooling window lies entirely in padding")
    xp_shape = xp.shape
    ph, pw = padding

    def back(g):
        gxp = np.zeros(xp_shape)
        for p, (a, b) in enumerate(positions):
            gxp[_window(gxp, 0, a, b, m, ho, wo, stride, dilation, offset)] += np.where(arg == p, g, 0.0)
        return (gxp[:, :, :, ph : ph + h, pw : pw + w],)

    return Tensor.make(out, (x,), back)


# ----------------------------------------------------------- feature maps


def _meta_after(meta: SubmapMeta, dr: int, dc: int, k: int, hw) -> SubmapMeta:
    return replace(meta.child(dr, dc, k), height=hw[0], width=hw[1])


def _multisample(x: FeatureMap, s: Sampler, padding, op) -> FeatureMap:
    k = s.k
    _, _, _, h, w = x.shape
    ph, pw = _pair(padding)
    if (h + 2 * ph) % k or (w + 2 * pw) % k:
        raise ShapeError(
            f"padded extent {h + 2 * ph}x{w + 2 * pw} is not divisible by the sampling window {k}"
        )
    outs, metas = [], []
    for dr, dc in _sampler.samples_of(s):
        y = op((dr, dc))
        hw = y.shape[3:]
        outs.append(y)
        metas.extend(_meta_after(mt, dr, dc, k, hw) for mt in x.metas)
    y = outs[0] if len(outs) == 1 else concat(outs, axis=2)
    order = sorted(range(len(metas)), key=lambda i: (metas[i].row_offset, metas[i].col_offset))
    if order != list(range(len(metas))):
        y = y.take(order, axis=2)
    return FeatureMap(y, tuple(metas[i] for i in order))


def _trad_out_hw(x: FeatureMap, kh, kw, k, padding, dilation, tail=(0, 0)):
    _, _, _, h, w = x.shape
    ph, pw = _pair(padding)
    dh, dw = _pair(dilation)
    th, tw = _pair(tail)
    return out_extent(h + th, kh, k, ph, dh), out_extent(w + tw, kw, k, pw, dw)


def _as_3d(weight: Tensor) -> Tensor:
    if weight.ndim == 4:
        o, c, kh, kw = weight.shape
        return weight.reshape(o, c, 1, kh, kw)
    return weight


def conv2d(x: FeatureMap, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding=0, dilation=1, tail=0) -> FeatureMap:
    """Ordinary (top-left sampler) convolution applied to every submap."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    w3 = _as_3d(weight)
    y = window_conv(x.tensor, w3, bias, stride, padding, dilation, tail=tail)
    hw = y.shape[3:]
    return FeatureMap(y, tuple(_meta_after(m, 0, 0, stride, hw) for m in x.metas))


def sampled_conv(x: FeatureMap, weight: Tensor, bias: Tensor | None, s: Sampler, padding=0, dilation=1) -> FeatureMap:
    """Stride-k convolution that keeps one submap per sample of ``s``."""
    w3 = _as_3d(weight)
    _, _, _, kh, kw = w3.shape
    out_hw = _trad_out_hw(x, kh, kw, s.k, padding, dilation)
    return _multisample(
        x, s, padding, lambda off: window_conv(x.tensor, w3, bias, s.k, padding, dilation, offset=off, out_hw=out_hw)
    )


def checkered_conv(x: FeatureMap, weight: Tensor, bias: Tensor | None = None, padding=0, dilation=1) -> FeatureMap:
    """Stride-2 convolution with the checkered sampler: submaps at offsets (0,0) and (1,1)."""
    return sampled_conv(x, weight, bias, _sampler.checkered(), padding, dilation)


def checkered_conv_complement(x: FeatureMap, weight: Tensor, bias: Tensor | None = None, padding=0, dilation=1) -> FeatureMap:
    return sampled_conv(x, weight, bias, _sampler.complement(_sampler.checkered()), padding, dilation)


def maxpool(x: FeatureMap, kernel=2, stride: int = 2, padding=0, dilation=1, tail=0) -> FeatureMap:
    y = window_maxpool(x.tensor, kernel, stride, padding, dilation, tail=tail)
    hw = y.shape[3:]
    return FeatureMap(y, tuple(_meta_after(m, 0, 0, stride, hw) for m in x.metas))


def sampled_maxpool(x: FeatureMap, s: Sampler, kernel=2, padding=0, dilation=1) -> FeatureMap:
    kh, kw = _pair(kernel)
    out_hw = _trad_out_hw(x, kh, kw, s.k, padding, dilation)
    return _multisample(
        x, s, padding, lambda off: window_maxpool(x.tensor, (kh, kw), s.k, padding, dilation, offset=off, out_hw=out_hw)
    )


def checkered_maxpool(x: FeatureMap, kernel=2) -> FeatureMap:
    return sampled_maxpool(x, _sampler.checkered(), kernel)


def conv3d_submap(x: FeatureMap, weight: Tensor, bias: Tensor | None = None, padding=0) -> FeatureMap:
    """Convolution that also spans ``km`` consecutive submaps (canonical order).

    Output submap ``j`` mixes input submaps ``j .. j+km-1`` and keeps the
    provenance of submap ``j``.
    """
    if weight.ndim != 5:
        raise ShapeError(f"conv3d_submap needs a (O, C, km, kh, kw) kernel, got {weight.shape}")
    y = window_conv(x.tensor, weight, bias, 1, padding, 1)
    hw = y.shape[3:]
    m_out = y.shape[2]
    return FeatureMap(y, tuple(replace(m, height=hw[0], width=hw[1]) for m in x.metas[:m_out]))


def relu(x: FeatureMap) -> FeatureMap:
    return x.with_tensor(x.tensor.relu())


def batchnorm(
    x: FeatureMap,
    gamma: Tensor,
    beta: Tensor,
    eps: float = 1e-5,
    training: bool = False,
    running_mean: np.ndarray | None = None,
    running_var: np.ndarray | None = None,
    momentum: float = 0.1,
) -> FeatureMap:
    """Per-channel normalisation with statistics pooled over batch, submaps and space.

    In training mode ``running_mean``/``running_var`` are updated in place with
    the batch mean and the unbiased batch variance.
    """
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"batchnorm parameters for {gamma.shape[0]} channels, feature map has {c}")
    shape = (1, c, 1, 1, 1)
    axes = (0, 2, 3, 4)
    if not training:
        if running_mean is None or running_var is None:
            raise ValueError("evaluation-mode batchnorm needs running statistics")
        inv = 1.0 / np.sqrt(running_var + eps)
        xhat = (x.tensor - running_mean.reshape(shape)) * inv.reshape(shape)
        return x.with_tensor(xhat * gamma.reshape(shape) + beta.reshape(shape))

    xd = x.data
    count = xd.size // c
    mu = xd.mean(axis=axes, keepdims=True)
    var = xd.var(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mu) * inv
    g = gamma.data.reshape(shape)
    out = xhat * g + beta.data.reshape(shape)
    if running_mean is not None:
        running_mean *= 1 - momentum
        running_mean += momentum * mu.reshape(c)
    if running_var is not None:
        unbiased = var.reshape(c) * count / max(count - 1, 1)
        running_var *= 1 - momentum
        running_var += momentum * unbiased

    def back(gy):
        gxhat = gy * g
        gx = inv / count * (
            count * gxhat - gxhat.sum(axis=axes, keepdims=True) - xhat * (gxhat * xhat).sum(axis=axes, keepdims=True)
        )
        return (gx, (gy * xhat).sum(axis=axes), gy.sum(axis=axes))

    return x.with_tensor(Tensor.make(out, (x.tensor, gamma, beta), back))


def mean_over_submaps(x: FeatureMap) -> FeatureMap:
    _, _, _, h, w = x.shape
    stride = x.metas[0].step_stride
    return FeatureMap(x.tensor.mean(axis=2, keepdims=True), (SubmapMeta(0, 0, stride, h, w),))


def global_pool3d(x: FeatureMap, mode: str = "avg") -> Tensor:
    """Reduce submaps and space to one value per channel: (B, C)."""
    b, c = x.shape[:2]
    flat = x.tensor.reshape(b, c, -1)
    if mode == "avg":
        return flat.mean(axis=2)
    if mode == "max":
        return flat.amax(axis=2)
    raise ValueError(f"unknown pooling mode {mode!r}")


def dropout(x: FeatureMap, rate: float, seed: int | np.random.Generator | None = None, training: bool = True) -> FeatureMap:
    """Inverted dropout; identity in evaluation mode."""
    if not 0 <= rate < 1:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0:
        return x
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x.with_tensor(x.tensor * keep)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` for (B, in) inputs and an (out, in) weight."""
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear layer expects {weight.shape[1]} inputs, got {x.shape[1]}")
    y = x @ weight.transpose(1, 0)
    return y if bias is None else y + bias


def stack_submaps(maps: Sequence[FeatureMap]) -> FeatureMap:
    """Concatenate feature maps along the submap axis and restore canonical order."""
    metas = [m for fm in maps for m in fm.metas]
    y = concat([fm.tensor for fm in maps], axis=2)
    order = [metas.index(m) for m in canonical(metas)]
    return FeatureMap(y.take(order, axis=2), tuple(metas[i] for i in order))
