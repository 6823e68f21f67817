"""Binary PGM (P5) / PPM (P6) writers and a matching reader, 8-bit only."""
from __future__ import annotations

import colorsys

import numpy as np


def encode(image: np.ndarray) -> bytes:
    img = np.asarray(image)
    if img.dtype != np.uint8:
        raise ValueError(f"expected uint8 pixels, got {img.dtype}")
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"expected (H, W) or (H, W, 3) image, got shape {img.shape}")
    h, w = img.shape[:2]
    return magic + f"\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img).tobytes()


def decode(blob: bytes) -> np.ndarray:
    magic = blob[:2]
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"not a binary PGM/PPM (magic {magic!r})")
    fields, pos = [], 2
    while len(fields) < 3:
        while blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            pos = blob.index(b"\n", pos) + 1
            continue
        start = pos
        while not blob[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(blob[start:pos]))
    pos += 1  # single whitespace before the raster
    w, h, maxval = fields
    if maxval != 255:
        raise ValueError(f"only 8-bit images are supported, maxval={maxval}")
    channels = 1 if magic == b"P5" else 3
    raster = np.frombuffer(blob, dtype=np.uint8, count=w * h * channels, offset=pos)
    return raster.reshape((h, w) if channels == 1 else (h, w, 3)).copy()


def write(path, image: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode(image))


def read(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode(fh.read())


def palette(n: int) -> np.ndarray:
    """``n`` distinct colours spread evenly around the hue circle."""
    if n <= 0:
        return np.zeros((0, 3), dtype=np.uint8)
    rgb = [colorsys.hsv_to_rgb(i / n, 0.85, 1.0) for i in range(n)]
    return np.round(np.array(rgb) * 255).astype(np.uint8)


def render_mask(mask: np.ndarray) -> np.ndarray:
    """White (255) where True, black elsewhere."""
    return np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)


def render_labels(labels: np.ndarray) -> np.ndarray:
    """Colour pixels by non-negative label; -1 stays black."""
    labels = np.asarray(labels)
    out = np.zeros(labels.shape + (3,), dtype=np.uint8)
    n = int(labels.max()) + 1 if labels.size else 0
    colours = palette(n)
    valid = labels >= 0
    out[valid] = colours[labels[valid]]
    return out
