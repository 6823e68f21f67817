"""Geometry of repeated multisampling.

Tracks where every submap's samples sit in the coordinates of the original
image while sampler sequences are applied.  No feature values are involved,
which makes this module the reference for the layer implementations in
:mod:`ccnn.nn`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence, Union

import numpy as np

from . import sampler as _sampler
from .sampler import Sampler


class TraceError(ValueError):
    pass


class SequenceParseError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True, order=True)
class SubmapMeta:
    """Provenance of one submap.

    Sample ``(i, j)`` of the submap sits at
    ``(row_offset + i * step_stride, col_offset + j * step_stride)`` in the
    original image.
    """

    row_offset: int
    col_offset: int
    step_stride: int = 1
    height: int = 0
    width: int = 0

    def child(self, dr: int, dc: int, k: int) -> "SubmapMeta":
        s = self.step_stride
        return SubmapMeta(
            self.row_offset + s * dr,
            self.col_offset + s * dc,
            s * k,
            -(-self.height // k),
            -(-self.width // k),
        )


def canonical(metas: Iterable[SubmapMeta]) -> list[SubmapMeta]:
    """Sort submaps top row first (ties, which only occur for non n-rooks samplers, by column)."""
    return sorted(metas, key=lambda m: (m.row_offset, m.col_offset))


@dataclass(frozen=True)
class TraceState:
    original_height: int
    original_width: int
    k: int = 2
    steps_applied: int = 0
    submaps: tuple[SubmapMeta, ...] = ()

    @classmethod
    def fresh(cls, height: int, width: int | None = None, k: int = 2) -> "TraceState":
        width = height if width is None else width
        if height < 1 or width < 1:
            raise TraceError(f"image extent must be positive, got {height}x{width}")
        if k < 1:
            raise TraceError(f"window size must be positive, got {k}")
        return cls(height, width, k, 0, (SubmapMeta(0, 0, 1, height, width),))

    @property
    def step_stride(self) -> int:
        return self.k ** self.steps_applied

    @property
    def shape(self) -> tuple[int, int, int]:
        """(#submaps, height, width) of the traced structure."""
        first = self.submaps[0]
        return (len(self.submaps), first.height, first.width)


@dataclass(frozen=True)
class SamplerSequence:
    """Per-step sampler ids, one entry per submap in canonical order."""

    lines: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "lines", tuple(tuple(int(v) for v in line) for line in self.lines))

    def __len__(self):
        return len(self.lines)

    def __getitem__(self, item):
        if isinstance(item, slice):
            return SamplerSequence(self.lines[item])
        return self.lines[item]

    @classmethod
    def parse(cls, text: str) -> "SamplerSequence":
        """Read the one-line-per-step text format (digits, no separators)."""
        lines = []
        for line_no, raw in enumerate(text.splitlines(), start=1):
            stripped = raw.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if not stripped.isdigit():
                raise SequenceParseError(line_no, f"expected sampler ids 0-9, got {stripped!r}")
            lines.append(tuple(int(ch) for ch in stripped))
        return cls(tuple(lines))

    def to_text(self) -> str:
        return "".join("".join(str(v) for v in line) + "\n" for line in self.lines)


def read_sequence(path) -> SamplerSequence:
    with open(path, encoding="ascii") as fh:
        return SamplerSequence.parse(fh.read())


def write_sequence(seq: SamplerSequence, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(seq.to_text())


def _resolve(entry, table: dict[int, Sampler], k: int) -> Sampler:
    if isinstance(entry, Sampler):
        s = entry
    else:
        try:
            s = table[int(entry)]
        except (KeyError, ValueError, TypeError):
            raise TraceError(f"unknown sampler id {entry!r}") from None
    if s.k != k:
        raise TraceError(f"sampler window {s.k} does not match trace window {k}")
    return s


def subsample_step(
    state: TraceState,
    assignment: Sequence[Union[int, Sampler]],
    samplers: dict[int, Sampler] | None = None,
) -> TraceState:
    """Apply one multisampling layer, one sampler per submap.

    ``assignment[i]`` applies to the i-th submap in canonical order and may be
    a sampler id or a :class:`Sampler`.
    """
    if len(assignment) != len(state.submaps):
        raise TraceError(
            f"assignment has {len(assignment)} entries but the state has {len(state.submaps)} submaps"
        )
    if samplers is None:
        try:
            samplers = _sampler.registry(state.k)
        except _sampler.SamplerError:
            samplers = {}
    children = []
    for meta, entry in zip(state.submaps, assignment):
        s = _resolve(entry, samplers, state.k)
        children.extend(meta.child(dr, dc, state.k) for dr, dc in _sampler.samples_of(s))
    return replace(state, steps_applied=state.steps_applied + 1, submaps=tuple(canonical(children)))


def apply_sequence(state: TraceState, seq: SamplerSequence, samplers=None) -> TraceState:
    for step, line in enumerate(seq.lines, start=1):
        try:
            state = subsample_step(state, line, samplers)
        except TraceError as exc:
            raise TraceError(f"sequence step {step}: {exc}") from None
    return state


def uniform_sequence(k: int, steps: int, sampler_id: int = 0) -> SamplerSequence:
    """Same sampler on every submap at every step (n = k samplers assumed)."""
    return SamplerSequence(tuple((sampler_id,) * k**t for t in range(steps)))


def random_sequence(k: int, steps: int, seed: int) -> SamplerSequence:
    """Independent uniform choice among the k registered n-rooks samplers."""
    if steps < 0:
        raise TraceError(f"steps must be non-negative, got {steps}")
    rng = np.random.default_rng(seed)
    return SamplerSequence(tuple(tuple(rng.integers(0, k, size=k**t).tolist()) for t in range(steps)))


_LATTICE_LINES = (
    "0",
    "00",
    "0101",
    "01100011",
    "0010100101001010",
    "00011000110001100011000110001100",
    "0000011111000001111100000111110000011111000001111100000111110000",
    "0000000000111111111100000000001111111111000000000011111111110000"
    "0000011111111110000000000111111111100000000001111111111000000000",
    "0000000000000000000011111111111111111111000000000000000000001111"
    "1111111111111110000000000000000000011111111111111111111000000000"
    "0000000000111111111111111111110000000000000000000011111111111111"
    "1111100000000000000000000111111111111111111110000000000000000000",
    # The published tenth line is cut off after 408 ids; it is a strict
    # 01 alternation, continued here to the required 512.
    "01" * 256,
)


def lattice_sequence(steps: int) -> SamplerSequence:
    """Low-discrepancy lattice sequence for the 2x2 checkered samplers (1-10 steps)."""
    if not 1 <= steps <= len(_LATTICE_LINES):
        raise NotImplementedError(f"lattice sequence is tabulated for 1..{len(_LATTICE_LINES)} steps, got {steps}")
    return SamplerSequence(tuple(tuple(int(ch) for ch in line) for line in _LATTICE_LINES[:steps]))


_STRIDE3_LINES = (
    (0,),
    (0, 2, 2),
    (0, 2, 2, 1, 0, 0, 1, 0, 2),
    (1, 1, 0, 0, 2, 1, 1, 1, 2, 1, 2, 1, 1, 1, 2, 0, 2, 0, 1, 2, 0, 0, 0, 0, 0, 1, 2),
)


def stride3_example_sequence() -> SamplerSequence:
    """The four-step sequence used with :func:`ccnn.sampler.stride3_set`."""
    return SamplerSequence(_STRIDE3_LINES)


def trace_positions(state: TraceState) -> set[tuple[int, int]]:
    """Original-image positions of every sample; padded positions are dropped."""
    out: set[tuple[int, int]] = set()
    for m in state.submaps:
        rows = m.row_offset + m.step_stride * np.arange(m.height)
        cols = m.col_offset + m.step_stride * np.arange(m.width)
        rows = rows[rows < state.original_height]
        cols = cols[cols < state.original_width]
        out.update((int(r), int(c)) for r in rows for c in cols)
    return out


def position_mask(state: TraceState) -> np.ndarray:
    """Boolean image, True where a sample was kept."""
    mask = np.zeros((state.original_height, state.original_width), dtype=bool)
    for r, c in trace_positions(state):
        mask[r, c] = True
    return mask


def submap_index_image(state: TraceState) -> np.ndarray:
    """Integer image holding the canonical submap index of each sample, -1 elsewhere."""
    img = np.full((state.original_height, state.original_width), -1, dtype=np.int64)
    for idx, m in enumerate(state.submaps):
        rows = m.row_offset + m.step_stride * np.arange(m.height)
        cols = m.col_offset + m.step_stride * np.arange(m.width)
        rows = rows[rows < state.original_height]
        cols = cols[cols < state.original_width]
        img[np.ix_(rows, cols)] = idx
    return img


@dataclass(frozen=True)
class CoverageReport:
    rows_covered: int
    cols_covered: int
    samples: int
    per_row: tuple[int, ...] = field(repr=False)
    per_col: tuple[int, ...] = field(repr=False)
    block_discrepancy: float

    def as_dict(self) -> dict:
        return {
            "rows_covered": self.rows_covered,
            "cols_covered": self.cols_covered,
            "samples": self.samples,
            "block_discrepancy": self.block_discrepancy,
            "per_row": list(self.per_row),
            "per_col": list(self.per_col),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.as_dict(), **kwargs)


def block_discrepancy(mask: np.ndarray, block: int) -> float:
    """Largest relative deviation of an aligned block's sample count from uniform.

    Blocks clipped by the image border are compared against an expectation
    scaled by their in-image area.
    """
    h, w = mask.shape
    total = int(mask.sum())
    if total == 0:
        return 0.0
    density = total / (h * w)
    worst = 0.0
    for r0 in range(0, h, block):
        for c0 in range(0, w, block):
            tile = mask[r0 : r0 + block, c0 : c0 + block]
            expected = density * tile.size
            worst = max(worst, abs(int(tile.sum()) - expected) / expected)
    return worst


def coverage_stats(state: TraceState) -> CoverageReport:
    mask = position_mask(state)
    per_row = mask.sum(axis=1)
    per_col = mask.sum(axis=0)
    return CoverageReport(
        rows_covered=int((per_row > 0).sum()),
        cols_covered=int((per_col > 0).sum()),
        samples=int(mask.sum()),
        per_row=tuple(int(v) for v in per_row),
        per_col=tuple(int(v) for v in per_col),
        block_discrepancy=block_discrepancy(mask, state.step_stride),
    )


def expected_samples(height: int, width: int, n: int, k: int, steps: int) -> float:
    """Sample count after ``steps`` layers that each keep n of every k*k elements."""
    return height * width * (n / k**2) ** steps

