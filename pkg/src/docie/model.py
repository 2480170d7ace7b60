"""Canonical in-memory data model shared by every pipeline stage.

All types are immutable after construction and safe to share across threads.
Word tokens are the unit of annotation; sub-word tokenization is entirely a
scorer's concern and never appears in this model.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

Box = tuple[int, int, int, int]

BOX_MAX = 1000


@dataclass(frozen=True)
class Token:
    """A word token with page, normalized box, and char offsets into the document text."""

    text: str
    page: int = 0
    box: Box = (0, 0, 0, 0)
    char_start: int = 0
    char_len: int = 0

    @property
    def char_end(self) -> int:
        return self.char_start + self.char_len


@dataclass(frozen=True)
class Entity:
    """A labeled contiguous token span; ``text`` is the whitespace-join of the covered tokens."""

    label: str
    token_start: int
    token_len: int
    text: str

    @property
    def token_end(self) -> int:
        """Exclusive end index."""
        return self.token_start + self.token_len


@dataclass(frozen=True)
class Document:
    id: str
    tokens: tuple[Token, ...]
    text: str
    entities: tuple[Entity, ...] = ()

    @classmethod
    def from_words(
        cls,
        doc_id: str,
        words: Sequence[str],
        spans: Iterable[tuple[str, int, int]] = (),
        boxes: Sequence[Box] | None = None,
        pages: Sequence[int] | None = None,
    ) -> "Document":
        """Build a document from word texts, deriving text and char offsets.

        ``spans`` are (label, token_start, token_len) triples; entity text is
        reconstructed with the canonical single-space join rule.
        """
        tokens: list[Token] = []
        offset = 0
        for i, word in enumerate(words):
            box = boxes[i] if boxes is not None else (0, 0, 0, 0)
            page = pages[i] if pages is not None else 0
            tokens.append(Token(word, page, tuple(box), offset, len(word)))
            offset += len(word) + 1
        text = " ".join(words)
        entities = tuple(
            Entity(label, start, length, " ".join(words[start : start + length]))
            for label, start, length in spans
        )
        return cls(id=doc_id, tokens=tuple(tokens), text=text, entities=entities)

    def entity_char_span(self, entity: Entity) -> tuple[int, int]:
        """(char_start, char_len) of an entity within this document's text."""
        first = self.tokens[entity.token_start]
        last = self.tokens[entity.token_start + entity.token_len - 1]
        return first.char_start, last.char_end - first.char_start

    def word_texts(self) -> tuple[str, ...]:
        return tuple(t.text for t in self.tokens)


@dataclass(frozen=True)
class Dataset:
    name: str
    label_set: tuple[str, ...]
    splits: dict[str, tuple[Document, ...]] = field(default_factory=dict)

    def with_split(self, name: str, documents: Sequence[Document]) -> "Dataset":
        splits = dict(self.splits)
        splits[name] = tuple(documents)
        return replace(self, splits=splits)

    def documents(self) -> Iterable[Document]:
        for docs in self.splits.values():
            yield from docs


@dataclass(frozen=True)
class Violation:
    """One broken invariant: which document, which field, which rule."""

    doc_id: str
    field: str
    rule: str

    def __str__(self) -> str:
        return f"{self.doc_id}: {self.field}: {self.rule}"


class DatasetValidationError(ValueError):
    """Raised by loaders when a dataset fails validation."""

    def __init__(self, violations: Sequence[Violation]):
        self.violations = list(violations)
        preview = "; ".join(str(v) for v in self.violations[:5])
        more = "" if len(self.violations) <= 5 else f" (+{len(self.violations) - 5} more)"
        super().__init__(f"dataset failed validation: {preview}{more}")


def _validate_tokens(doc: Document, out: list[Violation]) -> None:
    prev_end = 0
    for i, tok in enumerate(doc.tokens):
        x0, y0, x1, y1 = tok.box
        if not (0 <= x0 <= x1 <= BOX_MAX and 0 <= y0 <= y1 <= BOX_MAX):
            out.append(Violation(doc.id, f"tokens[{i}].box", f"box {tok.box} outside normalized [0, {BOX_MAX}] range"))
        if tok.char_len < 0 or tok.char_start < 0:
            out.append(Violation(doc.id, f"tokens[{i}]", "negative char offset or length"))
            continue
        if i > 0 and tok.char_start < prev_end:
            out.append(Violation(doc.id, f"tokens[{i}]", "char range overlaps or precedes previous token"))
        if tok.char_end > len(doc.text):
            out.append(Violation(doc.id, f"tokens[{i}]", "char range outside document text"))
        elif doc.text[tok.char_start : tok.char_end] != tok.text:
            out.append(Violation(doc.id, f"tokens[{i}]", "token text differs from covered substring"))
        prev_end = tok.char_end


def _validate_entities(doc: Document, label_set: tuple[str, ...], out: list[Violation]) -> None:
    n = len(doc.tokens)
    in_range: list[Entity] = []
    for i, ent in enumerate(doc.entities):
        if ent.token_len < 1:
            out.append(Violation(doc.id, f"entities[{i}]", "token_len must be >= 1"))
            continue
        if ent.token_start < 0 or ent.token_start + ent.token_len > n:
            out.append(Violation(doc.id, f"entities[{i}]", "span out of range"))
            continue
        if ent.label not in label_set:
            out.append(Violation(doc.id, f"entities[{i}].label", f"label {ent.label!r} not in label set"))
        joined = " ".join(t.text for t in doc.tokens[ent.token_start : ent.token_start + ent.token_len])
        if ent.text != joined:
            out.append(Violation(doc.id, f"entities[{i}].text", "text differs from whitespace-join of covered tokens"))
        in_range.append(ent)
    ordered = sorted(in_range, key=lambda e: (e.token_start, e.token_len))
    for a, b in zip(ordered, ordered[1:]):
        if b.token_start < a.token_start + a.token_len:
            out.append(
                Violation(
                    doc.id,
                    "entities",
                    f"overlap between {a.label}@[{a.token_start},{a.token_end}) and {b.label}@[{b.token_start},{b.token_end})",
                )
            )


def validate(dataset: Dataset) -> list[Violation]:
    """Check every model invariant; an empty list means the dataset is well-formed."""
    out: list[Violation] = []
    for split_name, docs in dataset.splits.items():
        seen_ids: set[str] = set()
        for doc in docs:
            if doc.id in seen_ids:
                out.append(Violation(doc.id, "id", f"duplicate document id in split {split_name!r}"))
            seen_ids.add(doc.id)
            _validate_tokens(doc, out)
            _validate_entities(doc, dataset.label_set, out)
    return out


def ensure_valid(dataset: Dataset) -> Dataset:
    """Return the dataset unchanged or raise ``DatasetValidationError``."""
    violations = validate(dataset)
    if violations:
        raise DatasetValidationError(violations)
    return dataset
