"""Samplers: binary element selectors over a k x k sampling window.

A sampler decides which elements of every k x k window a subsampling layer
keeps.  Each kept element becomes its own submap, so a sampler with ``n``
ones multiplies the submap count by ``n`` at every step.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SamplerError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Sampler:
    """A k x k binary mask; 1 marks an element that is sampled."""

    mask: np.ndarray = field(repr=False)

    def __post_init__(self):
        mask = np.asarray(self.mask)
        if mask.ndim != 2 or mask.shape[0] != mask.shape[1] or mask.shape[0] < 1:
            raise SamplerError(f"sampler mask must be square and non-empty, got shape {mask.shape}")
        if not np.isin(mask, (0, 1)).all():
            raise SamplerError("sampler mask must be binary")
        if not mask.any():
            raise SamplerError("sampler mask must select at least one element")
        mask = mask.astype(np.uint8)
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @property
    def k(self) -> int:
        return int(self.mask.shape[0])

    @property
    def n(self) -> int:
        return int(self.mask.sum())

    def __eq__(self, other):
        if not isinstance(other, Sampler):
            return NotImplemented
        return self.mask.shape == other.mask.shape and bool((self.mask == other.mask).all())

    def __hash__(self):
        return hash((self.k, self.mask.tobytes()))

    def __repr__(self):
        return f"Sampler(k={self.k}, n={self.n}, mask={self.mask.tolist()})"


def _check_k(k: int) -> int:
    if int(k) != k or k < 1:
        raise SamplerError(f"window size must be a positive integer, got {k!r}")
    return int(k)


def checkered() -> Sampler:
    """Top-left and bottom-right element of each 2x2 window."""
    return Sampler(np.array([[1, 0], [0, 1]]))


def complement(s: Sampler) -> Sampler:
    """Mirror ``s`` across the vertical axis.

    For the 2x2 checkered sampler this gives the top-right/bottom-left sampler.
    """
    return Sampler(s.mask[:, ::-1].copy())


def traditional(k: int) -> Sampler:
    """The single top-left sample taken by an ordinary stride-k layer."""
    k = _check_k(k)
    mask = np.zeros((k, k), dtype=np.uint8)
    mask[0, 0] = 1
    return Sampler(mask)


def complete(k: int) -> Sampler:
    """Every element of the window (no resolution lost)."""
    k = _check_k(k)
    return Sampler(np.ones((k, k), dtype=np.uint8))


def stride3_set() -> list[Sampler]:
    """Three 3x3 n-rooks samplers that partition the window.

    Sampler ``i`` takes the cells with ``(row + col) % 3 == (2 + i) % 3``, so
    id 0 is the anti-diagonal.  Applied at random they favour diagonals that
    run from bottom-left to top-right.
    """
    rows, cols = np.indices((3, 3))
    return [Sampler(((rows + cols) % 3 == (2 + i) % 3).astype(np.uint8)) for i in range(3)]


def is_n_rooks(s: Sampler) -> bool:
    """True iff every row and every column of the window holds exactly one sample."""
    return bool((s.mask.sum(axis=0) == 1).all() and (s.mask.sum(axis=1) == 1).all())


def samples_of(s: Sampler) -> list[tuple[int, int]]:
    """(row, col) positions of the sampled elements in row-major order."""
    return [(int(r), int(c)) for r, c in zip(*np.nonzero(s.mask))]


def registry(k: int) -> dict[int, Sampler]:
    """Samplers addressable by id inside a sampler sequence.

    k=2: 0 is checkered, 1 its complement.  k=3: ids 0..2 from :func:`stride3_set`.
    """
    if k == 2:
        return {0: checkered(), 1: complement(checkered())}
    if k == 3:
        return dict(enumerate(stride3_set()))
    raise SamplerError(f"no sampler registry for window size {k}")
