import numpy as np
import pytest


def naive_conv2d(x, w, b=None, stride=1, pad=0, dil=1):
    """Direct loop cross-correlation, (B, C, H, W) -> (B, O, Ho, Wo)."""
    bsz, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    xp = np.zeros((bsz, c, h + 2 * pad, wd + 2 * pad))
    xp[:, :, pad : pad + h, pad : pad + wd] = x
    ho = (h + 2 * pad - dil * (kh - 1) - 1) // stride + 1
    wo = (wd + 2 * pad - dil * (kw - 1) - 1) // stride + 1
    out = np.zeros((bsz, o, ho, wo))
    for n in range(bsz):
        for oc in range(o):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for ic in range(c):
                        for a in range(kh):
                            for bb in range(kw):
                                acc += w[oc, ic, a, bb] * xp[n, ic, i * stride + a * dil, j * stride + bb * dil]
                    out[n, oc, i, j] = acc + (0.0 if b is None else b[oc])
    return out


def naive_maxpool(x, k=2, stride=2, pad=0):
    bsz, c, h, wd = x.shape
    xp = np.full((bsz, c, h + 2 * pad, wd + 2 * pad), -np.inf)
    xp[:, :, pad : pad + h, pad : pad + wd] = x
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    out = np.zeros((bsz, c, ho, wo))
    for i in range(ho):
        for j in range(wo):
            out[:, :, i, j] = xp[:, :, i * stride : i * stride + k, j * stride : j * stride + k].max(axis=(2, 3))
    return out


def naive_conv3d(x, w, b=None, pad=0):
    """(B, C, M, H, W) with a (O, C, km, kh, kw) kernel, no padding along M."""
    bsz, c, m, h, wd = x.shape
    o, _, km, kh, kw = w.shape
    xp = np.zeros((bsz, c, m, h + 2 * pad, wd + 2 * pad))
    xp[:, :, :, pad : pad + h, pad : pad + wd] = x
    mo, ho, wo = m - km + 1, h + 2 * pad - kh + 1, wd + 2 * pad - kw + 1
    out = np.zeros((bsz, o, mo, ho, wo))
    for n in range(bsz):
        for oc in range(o):
            for d in range(mo):
                for i in range(ho):
                    for j in range(wo):
                        patch = xp[n, :, d : d + km, i : i + kh, j : j + kw]
                        out[n, oc, d, i, j] = (patch * w[oc]).sum() + (0.0 if b is None else b[oc])
    return out


def naive_batchnorm2d(x, gamma, beta, eps):
    """Training-mode batchnorm of (B, C, H, W) with biased variance."""
    mu = x.mean(axis=(0, 2, 3), keepdims=True)
    var = ((x - mu) ** 2).mean(axis=(0, 2, 3), keepdims=True)
    return gamma[None, :, None, None] * (x - mu) / np.sqrt(var + eps) + beta[None, :, None, None]


def central_difference(f, arr, h=1e-5):
    g = np.zeros_like(arr)
    for idx in np.ndindex(arr.shape):
        old = arr[idx]
        arr[idx] = old + h
        up = f()
        arr[idx] = old - h
        down = f()
        arr[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
