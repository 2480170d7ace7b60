"""Convert a token-classification dataset into an extractive-QA dataset.

One question per (document, label) pair, built from a fixed template.  All
gold entities of that label become the sample's answers.  Optionally emits
empty-answer samples for labels absent from a document.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .model import Dataset, Document

DEFAULT_TEMPLATE = "What is the <LABEL>?"
PLACEHOLDER = "<LABEL>"


@dataclass(frozen=True)
class Answer:
    char_start: int
    char_len: int
    text: str


@dataclass(frozen=True)
class QASample:
    doc_id: str
    question: str
    label: str
    answers: tuple[Answer, ...]

    @property
    def unanswerable(self) -> bool:
        return not self.answers


@dataclass(frozen=True)
class QADataset:
    name: str
    label_set: tuple[str, ...]
    splits: dict[str, tuple[QASample, ...]] = field(default_factory=dict)
    source: Dataset | None = None


def humanize_label(label: str) -> str:
    """Human-readable form used inside questions: underscores to spaces, lower-cased."""
    return label.replace("_", " ").lower()


def label_to_question(label: str, template: str = DEFAULT_TEMPLATE) -> str:
    if template.count(PLACEHOLDER) != 1:
        raise ValueError(f"template must contain exactly one {PLACEHOLDER} placeholder: {template!r}")
    if not label:
        raise ValueError("label must be non-empty")
    return template.replace(PLACEHOLDER, humanize_label(label))


def _sample_for(doc: Document, label: str, template: str) -> QASample | None:
    answers = []
    for ent in doc.entities:
        if ent.label != label:
            continue
        char_start, char_len = doc.entity_char_span(ent)
        answers.append(Answer(char_start, char_len, ent.text))
    if not answers:
        return None
    return QASample(doc.id, label_to_question(label, template), label, tuple(answers))


def to_qa(
    dataset: Dataset,
    template: str = DEFAULT_TEMPLATE,
    include_unanswerable: bool = False,
) -> QADataset:
    """Emit one sample per (document, label) pair that has gold entities.

    With ``include_unanswerable`` the remaining (document, label) pairs are
    emitted as empty-answer samples.  Sample order is document order, then
    label-set order, so conversion is deterministic.
    """
    splits: dict[str, tuple[QASample, ...]] = {}
    for split_name, docs in dataset.splits.items():
        samples: list[QASample] = []
        for doc in docs:
            for label in dataset.label_set:
                sample = _sample_for(doc, label, template)
                if sample is not None:
                    samples.append(sample)
                elif include_unanswerable:
                    samples.append(QASample(doc.id, label_to_question(label, template), label, ()))
        splits[split_name] = tuple(samples)
    return QADataset(dataset.name, dataset.label_set, splits, dataset)


def qa_stats(qa_dataset: QADataset) -> dict[str, int]:
    """Sample count per split."""
    return {name: len(samples) for name, samples in qa_dataset.splits.items()}


def to_squad_dict(qa_dataset: QADataset, split: str) -> dict:
    """SQuAD-style layout (context, question, answers with answer_start) for one split."""
    if qa_dataset.source is None:
        raise ValueError("QA dataset has no source dataset to take contexts from")
    docs = {d.id: d for d in qa_dataset.source.splits.get(split, ())}
    by_doc: dict[str, list[QASample]] = {}
    for sample in qa_dataset.splits.get(split, ()):
        by_doc.setdefault(sample.doc_id, []).append(sample)
    data = []
    for doc_id, samples in by_doc.items():
        context = docs[doc_id].text
        qas = [
            {
                "id": f"{doc_id}::{s.label}",
                "question": s.question,
                "is_impossible": s.unanswerable,
                "answers": [
                    {"text": a.text, "answer_start": a.char_start} for a in s.answers
                ],
            }
            for s in samples
        ]
        data.append({"title": doc_id, "paragraphs": [{"context": context, "qas": qas}]})
    return {"version": "v2.0", "data": data}


def save_squad(qa_dataset: QADataset, directory: str | Path) -> list[Path]:
    """Write one SQuAD-style JSON file per split; returns the written paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for split in qa_dataset.splits:
        path = directory / f"{split}.json"
        payload = to_squad_dict(qa_dataset, split)
        path.write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        written.append(path)
    return written
