"""Turn scorer logits into predicted entities.

QA: enumerate candidate spans, filter by an answerability rule, rank by the
start+end logit sum, and keep the top k.  TC: per-token argmax followed by
IOB decoding.  Either way, per-chunk predictions are mapped back to document
coordinates and aggregated into a non-overlapping per-label entity list.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from . import iob
from .chunking import Chunk
from .iob import RepairPolicy, TagSequence, tag_vocabulary
from .model import Entity

RAW_POSITIVE = "raw_positive"
NULL_DIFF = "null_diff"


@dataclass(frozen=True)
class QALogits:
    """Word-level start/end logits for one chunk, plus the no-answer slot."""

    null_slot: tuple[float, float]
    start_logits: tuple[float, ...]
    end_logits: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.start_logits) != len(self.end_logits):
            raise ValueError("start and end logits must have equal length")

    def __len__(self) -> int:
        return len(self.start_logits)


@dataclass(frozen=True)
class ScoredSpan:
    token_start: int
    token_end: int  # inclusive
    score: float
    text: str = ""


@dataclass(frozen=True)
class ExtractConfig:
    k: int = 10
    max_answer_len: int = 100
    answerability: str = RAW_POSITIVE
    allow_overlap: bool = False

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_answer_len < 1:
            raise ValueError("max_answer_len must be >= 1")
        if self.answerability not in (RAW_POSITIVE, NULL_DIFF):
            raise ValueError(f"unknown answerability mode {self.answerability!r}")


def extract_spans(
    logits: QALogits,
    cfg: ExtractConfig = ExtractConfig(),
    tokens: Sequence[str] | None = None,
) -> list[ScoredSpan]:
    """Top-k viable spans; an empty list means the model abstains.

    Candidates are all (s, e) with s <= e < s + max_answer_len, scored by
    start_logits[s] + end_logits[e].  raw_positive keeps scores > 0;
    null_diff keeps scores above the null-slot sum.  Ties break by (s, e)
    ascending; without allow_overlap, lower-ranked overlapping spans are
    skipped greedily.
    """
    n = len(logits)
    threshold = 0.0 if cfg.answerability == RAW_POSITIVE else logits.null_slot[0] + logits.null_slot[1]
    candidates: list[tuple[float, int, int]] = []
    for s in range(n):
        start_logit = logits.start_logits[s]
        for e in range(s, min(s + cfg.max_answer_len, n)):
            score = start_logit + logits.end_logits[e]
            if score > threshold:
                candidates.append((score, s, e))
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    selected: list[ScoredSpan] = []
    for score, s, e in candidates:
        if len(selected) == cfg.k:
            break
        if not cfg.allow_overlap and any(s <= p.token_end and p.token_start <= e for p in selected):
            continue
        text = " ".join(tokens[s : e + 1]) if tokens is not None else ""
        selected.append(ScoredSpan(s, e, score, text))
    return selected


def argmax_tags(token_logits: Sequence[Sequence[float]], label_set: Sequence[str]) -> TagSequence:
    """Per-token argmax over the IOB tag vocabulary; ties go to the lowest tag index."""
    vocab = tag_vocabulary(label_set)
    tags: list[str] = []
    for i, row in enumerate(token_logits):
        if len(row) != len(vocab):
            raise ValueError(f"logit row {i} has length {len(row)}, expected {len(vocab)}")
        best = 0
        for j in range(1, len(row)):
            if row[j] > row[best]:
                best = j
        tags.append(vocab[best])
    return TagSequence(tuple(tags), tuple(label_set))


def decode_tc(
    token_logits: Sequence[Sequence[float]],
    label_set: Sequence[str],
    policy: RepairPolicy = iob.BEGIN_ON_ORPHAN,
    tokens: Sequence[str] | None = None,
) -> list[Entity]:
    """Argmax tagging followed by IOB decoding with the given repair policy."""
    return iob.decode(argmax_tags(token_logits, label_set), policy, tokens)


@dataclass(frozen=True)
class ScoredPrediction:
    """A predicted entity in document coordinates, carrying its ranking score."""

    label: str
    token_start: int
    token_len: int
    score: float
    text: str = ""

    @property
    def token_end(self) -> int:
        return self.token_start + self.token_len


def spans_to_predictions(chunk_: Chunk, label: str, spans: Iterable[ScoredSpan]) -> list[ScoredPrediction]:
    """QA spans from one chunk, shifted into document coordinates."""
    return [
        ScoredPrediction(label, chunk_.start + s.token_start, s.token_end - s.token_start + 1, s.score, s.text)
        for s in spans
    ]


def entities_to_predictions(chunk_: Chunk, entities: Iterable[Entity]) -> list[ScoredPrediction]:
    """TC entities from one chunk; score is span length so that longer spans win."""
    return [
        ScoredPrediction(e.label, chunk_.start + e.token_start, e.token_len, float(e.token_len), e.text)
        for e in entities
    ]


def aggregate(predictions: Iterable[ScoredPrediction]) -> list[ScoredPrediction]:
    """Merge per-chunk predictions into a non-overlapping per-label list.

    Identical (label, range) duplicates collapse to the highest score; among
    overlapping same-label predictions the highest score survives.  The
    result is sorted by position and the operation is idempotent.
    """
    best: dict[tuple[str, int, int], ScoredPrediction] = {}
    for p in predictions:
        key = (p.label, p.token_start, p.token_len)
        held = best.get(key)
        if held is None or p.score > held.score:
            best[key] = p
    by_label: dict[str, list[ScoredPrediction]] = {}
    for p in best.values():
        by_label.setdefault(p.label, []).append(p)
    selected: list[ScoredPrediction] = []
    for label in sorted(by_label):
        taken: list[ScoredPrediction] = []
        for p in sorted(by_label[label], key=lambda p: (-p.score, p.token_start, p.token_len)):
            if any(p.token_start < t.token_end and t.token_start < p.token_end for t in taken):
                continue
            taken.append(p)
        selected.extend(taken)
    selected.sort(key=lambda p: (p.token_start, p.label, p.token_len))
    return selected


def predictions_to_entities(predictions: Iterable[ScoredPrediction]) -> list[Entity]:
    return [Entity(p.label, p.token_start, p.token_len, p.text) for p in predictions]
