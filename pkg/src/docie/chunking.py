"""Split long documents into overlapping fixed-capacity token windows.

The window is the context token capacity left after the caller reserves its
question and special-slot budget; chunking itself is tokenizer-agnostic and
works purely in document token coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .model import Document, Entity


def default_overlap(window: int) -> int:
    """Stride default: 128 tokens for large windows, half the window otherwise."""
    return 128 if window >= 256 else window // 2


@dataclass(frozen=True)
class ChunkSpec:
    window: int
    overlap: int

    def __post_init__(self) -> None:
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if not 0 <= self.overlap < self.window:
            raise ValueError("overlap must satisfy 0 <= overlap < window")

    @classmethod
    def with_default_overlap(cls, window: int) -> "ChunkSpec":
        return cls(window, default_overlap(window))


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    index: int
    start: int
    end: int  # exclusive, document token coordinates

    def __len__(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class LocalSpan:
    """A span remapped into window-local token coordinates."""

    label: str
    start: int
    end: int  # exclusive
    clipped: bool = False


def chunk(document: Document, spec: ChunkSpec) -> list[Chunk]:
    """Windows start at multiples of (window - overlap); the last one is clipped.

    Every token is covered by at least one chunk.  An empty document yields no
    chunks.
    """
    n = len(document.tokens)
    if n == 0:
        return []
    step = spec.window - spec.overlap
    chunks: list[Chunk] = []
    start = 0
    while start + spec.window < n:
        chunks.append(Chunk(document.id, len(chunks), start, start + spec.window))
        start += step
    chunks.append(Chunk(document.id, len(chunks), start, n))
    return chunks


def remap(chunk_: Chunk, entities: Sequence[Entity], boundary_policy: str = "drop") -> list[LocalSpan]:
    """Map entities into window-local coordinates.

    Entities fully inside the chunk become plain local spans.  Entities that
    straddle a boundary are handled per policy: ``drop`` omits them, ``clip``
    and ``mark_partial`` keep the in-window intersection flagged as clipped
    (the two differ only in how downstream consumers treat the flag).
    """
    if boundary_policy not in ("drop", "clip", "mark_partial"):
        raise ValueError(f"unknown boundary policy {boundary_policy!r}")
    out: list[LocalSpan] = []
    for ent in entities:
        ent_start, ent_end = ent.token_start, ent.token_start + ent.token_len
        inter_start = max(ent_start, chunk_.start)
        inter_end = min(ent_end, chunk_.end)
        if inter_start >= inter_end:
            continue
        fully_inside = ent_start >= chunk_.start and ent_end <= chunk_.end
        if fully_inside:
            out.append(LocalSpan(ent.label, ent_start - chunk_.start, ent_end - chunk_.start))
        elif boundary_policy == "drop":
            continue
        else:
            out.append(LocalSpan(ent.label, inter_start - chunk_.start, inter_end - chunk_.start, clipped=True))
    return out
