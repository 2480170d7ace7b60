"""Encode entity lists as IOB tag sequences and decode them back.

Decoding accepts malformed model output (orphan I tags, O gaps punched into
a long entity) and repairs it according to a configurable policy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .model import Document, Entity

OUTSIDE = "O"


@dataclass(frozen=True)
class RepairPolicy:
    """How to treat tag runs that no valid encoding produces.

    strict          -> orphan I is an error
    begin_on_orphan -> orphan I opens a new entity as if it were B
    bridge          -> an O-run of length <= max_gap followed by an orphan I of
                       the same label is absorbed into the open entity;
                       anything else falls back to begin_on_orphan
    """

    kind: str
    max_gap: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("strict", "begin_on_orphan", "bridge"):
            raise ValueError(f"unknown repair policy {self.kind!r}")
        if self.max_gap < 0:
            raise ValueError("max_gap must be >= 0")


STRICT = RepairPolicy("strict")
BEGIN_ON_ORPHAN = RepairPolicy("begin_on_orphan")


def bridge(max_gap: int) -> RepairPolicy:
    return RepairPolicy("bridge", max_gap)


def parse_policy(name: str, bridge_gap: int = 0) -> RepairPolicy:
    """Parse a policy name as used in configs and CLI flags, e.g. ``bridge:2``."""
    if name.startswith("bridge:"):
        return bridge(int(name.split(":", 1)[1]))
    if name == "bridge":
        return bridge(bridge_gap)
    return RepairPolicy(name)


@dataclass(frozen=True)
class TagSequence:
    tags: tuple[str, ...]
    label_set: tuple[str, ...]


class IobDecodeError(ValueError):
    """Raised under the strict policy when an orphan I tag is found."""

    def __init__(self, position: int, tag: str, reason: str):
        self.position = position
        self.tag = tag
        super().__init__(f"orphan tag {tag!r} at position {position}: {reason}")


def tag_vocabulary(label_set: Sequence[str]) -> list[str]:
    """Fixed tag ordering: O first, then B-/I- pairs in label order."""
    vocab = [OUTSIDE]
    for label in label_set:
        vocab.append(f"B-{label}")
        vocab.append(f"I-{label}")
    return vocab


def encode(document: Document, label_set: Sequence[str]) -> TagSequence:
    """Entity first token -> B-label, rest -> I-label, everything else -> O."""
    tags = [OUTSIDE] * len(document.tokens)
    for ent in sorted(document.entities, key=lambda e: e.token_start):
        if ent.token_start + ent.token_len > len(tags) or ent.token_start < 0:
            raise ValueError(f"entity {ent.label}@[{ent.token_start},{ent.token_end}) out of range")
        if ent.label not in label_set:
            raise ValueError(f"entity label {ent.label!r} not in label set")
        for i in range(ent.token_start, ent.token_start + ent.token_len):
            if tags[i] != OUTSIDE:
                raise ValueError(f"overlapping entities at token {i}")
            tags[i] = f"I-{ent.label}"
        tags[ent.token_start] = f"B-{ent.label}"
    return TagSequence(tuple(tags), tuple(label_set))


def _parse_tag(tag: str, label_set: tuple[str, ...], position: int) -> tuple[str, str | None]:
    if tag == OUTSIDE:
        return OUTSIDE, None
    if len(tag) > 2 and tag[1] == "-" and tag[0] in ("B", "I"):
        label = tag[2:]
        if label not in label_set:
            raise ValueError(f"tag {tag!r} at position {position} uses unknown label {label!r}")
        return tag[0], label
    raise ValueError(f"malformed tag {tag!r} at position {position}")


def decode(
    sequence: TagSequence,
    policy: RepairPolicy = BEGIN_ON_ORPHAN,
    tokens: Sequence[str] | None = None,
) -> list[Entity]:
    """Recover the entity list from a tag sequence, repairing per the policy.

    When ``tokens`` (the word texts the sequence describes) are given, entity
    text is reconstructed with the canonical join rule; otherwise it is empty.
    """
    if tokens is not None and len(tokens) != len(sequence.tags):
        raise ValueError("token count does not match tag count")
    tags = sequence.tags
    n = len(tags)
    entities: list[Entity] = []
    open_label: str | None = None
    open_start = 0

    def close(end: int) -> None:
        nonlocal open_label
        if open_label is not None:
            text = " ".join(tokens[open_start:end]) if tokens is not None else ""
            entities.append(Entity(open_label, open_start, end - open_start, text))
            open_label = None

    i = 0
    while i < n:
        kind, label = _parse_tag(tags[i], sequence.label_set, i)
        if kind == OUTSIDE:
            if open_label is not None and policy.kind == "bridge":
                j = i
                while j < n and tags[j] == OUTSIDE:
                    j += 1
                if j < n and j - i <= policy.max_gap:
                    next_kind, next_label = _parse_tag(tags[j], sequence.label_set, j)
                    if next_kind == "I" and next_label == open_label:
                        i = j  # absorb the gap into the open entity
                        continue
            close(i)
            i += 1
        elif kind == "B":
            close(i)
            open_label, open_start = label, i
            i += 1
        else:  # I
            if open_label == label:
                i += 1
                continue
            if policy.kind == "strict":
                if open_label is None:
                    reason = "I with no open entity (at start or after O)"
                else:
                    reason = f"I after entity of different label {open_label!r}"
                raise IobDecodeError(i, tags[i], reason)
            close(i)
            open_label, open_start = label, i
            i += 1
    close(n)
    return entities
