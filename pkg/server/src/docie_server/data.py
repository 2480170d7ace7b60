"""Readers for the harness's published file formats.

Canonical dataset directories feed token-classification training; SQuAD-style
QA files feed extractive-QA training.  Both layouts are documented in
PROTOCOL.md; contexts use the canonical single-space join, so word offsets
are recoverable with a plain split.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class TaggedDoc:
    doc_id: str
    words: list[str]
    boxes: list[list[int]]
    spans: list[tuple[str, int, int]]  # (label, word_start, word_len)


@dataclass(frozen=True)
class QAExample:
    doc_id: str
    question: str
    words: list[str]
    boxes: list[list[int]]
    # word-index answer spans; empty means unanswerable
    answers: list[tuple[int, int]]


def load_canonical(path: str | Path) -> tuple[list[str], dict[str, list[TaggedDoc]]]:
    root = Path(path)
    meta = json.loads((root / "dataset.json").read_text(encoding="utf-8"))
    label_set = list(meta["label_set"])
    splits: dict[str, list[TaggedDoc]] = {}
    for split in meta["splits"]:
        docs = []
        for record in json.loads((root / f"{split}.json").read_text(encoding="utf-8")):
            words = [t["text"] for t in record["tokens"]]
            boxes = [list(t["box"]) for t in record["tokens"]]
            spans = [(e["label"], e["token_start"], e["token_len"]) for e in record["entities"]]
            docs.append(TaggedDoc(record["id"], words, boxes, spans))
        splits[split] = docs
    return label_set, splits


def _word_index_of_char(context: str, char_pos: int) -> int:
    # canonical join: the word index equals the number of spaces before the char
    return context.count(" ", 0, char_pos)


def load_squad(path: str | Path) -> list[QAExample]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    examples = []
    for article in payload["data"]:
        for paragraph in article["paragraphs"]:
            context = paragraph["context"]
            words = context.split(" ") if context else []
            boxes = [[0, 0, 0, 0]] * len(words)
            for qa in paragraph["qas"]:
                answers = []
                for ans in qa.get("answers", []):
                    start_word = _word_index_of_char(context, ans["answer_start"])
                    end_char = ans["answer_start"] + len(ans["text"]) - 1
                    end_word = _word_index_of_char(context, max(end_char, ans["answer_start"]))
                    answers.append((start_word, end_word - start_word + 1))
                examples.append(
                    QAExample(article.get("title", ""), qa["question"], words, boxes, answers)
                )
    return examples


def iob_tags(label_set: list[str]) -> list[str]:
    tags = ["O"]
    for label in label_set:
        tags.append(f"B-{label}")
        tags.append(f"I-{label}")
    return tags


def doc_tag_ids(doc: TaggedDoc, label_set: list[str]) -> list[int]:
    index = {t: i for i, t in enumerate(iob_tags(label_set))}
    ids = [0] * len(doc.words)
    for label, start, length in doc.spans:
        ids[start] = index[f"B-{label}"]
        for i in range(start + 1, start + length):
            ids[i] = index[f"I-{label}"]
    return ids
