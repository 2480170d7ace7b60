"""Shared fixture builders: small hand-authored datasets plus seeded random ones."""

from __future__ import annotations

import random

from docie.model import Box, Dataset, Document

LABELS = ("company", "address", "total", "date")


def make_box(i: int) -> Box:
    x0 = (i * 37) % 900
    y0 = (i * 53) % 900
    return (x0, y0, x0 + 40, y0 + 20)


def make_document(doc_id: str, words: list[str], spans: list[tuple[str, int, int]]) -> Document:
    boxes = [make_box(i) for i in range(len(words))]
    return Document.from_words(doc_id, words, spans, boxes)


def tiny_dataset() -> Dataset:
    """Two documents, three entities, the four-label receipt-style label set."""
    doc1 = make_document(
        "doc-1",
        ["ACME", "Inc", "sold", "by", "ACME", "Store", "on", "2020-01-02"],
        [("company", 0, 2), ("company", 4, 2), ("date", 7, 1)],
    )
    doc2 = make_document("doc-2", ["no", "entities", "here"], [])
    return Dataset("tiny", LABELS, {"train": (doc1, doc2)})


def receipt_document(doc_id: str, salt: int) -> Document:
    """A small receipt-like document with one entity per label."""
    words = [
        f"Shop{salt}", "Mart",            # company [0, 2)
        "receipt", "no", str(1000 + salt),
        "total", str(salt % 97) + ".50",  # total [6, 7)
        "date", f"2021-03-{salt % 28 + 1:02d}",  # date [8, 9)
        "at", f"{salt}", "Main", "Street",       # address [10, 13)
        "thank", "you",
    ]
    spans = [("company", 0, 2), ("total", 6, 1), ("date", 8, 1), ("address", 10, 3)]
    return make_document(doc_id, words, spans)


def receipt_dataset(n_docs: int = 100, with_train: bool = True) -> Dataset:
    test = tuple(receipt_document(f"test-{i:03d}", i) for i in range(n_docs))
    splits = {"test": test}
    if with_train:
        splits = {
            "train": tuple(receipt_document(f"train-{i:03d}", i + 1000) for i in range(n_docs)),
            "validation": tuple(receipt_document(f"val-{i:03d}", i + 5000) for i in range(max(1, n_docs // 5))),
            "test": test,
        }
    return Dataset("receipts", LABELS, splits)


def random_document(rng: random.Random, doc_id: str, labels: tuple[str, ...] = LABELS) -> Document:
    n_words = rng.randint(1, 30)
    words = [f"w{rng.randint(0, 99)}" for _ in range(n_words)]
    spans: list[tuple[str, int, int]] = []
    pos = 0
    while pos < n_words:
        if rng.random() < 0.3:
            length = min(rng.randint(1, 4), n_words - pos)
            spans.append((rng.choice(labels), pos, length))
            pos += length + 1  # leave a gap so entities stay non-overlapping
        else:
            pos += 1
    return make_document(doc_id, words, spans)


def random_dataset(seed: int, labels: tuple[str, ...] = LABELS) -> Dataset:
    rng = random.Random(seed)
    splits = {}
    for split in ("train", "test"):
        n = rng.randint(0, 6)
        splits[split] = tuple(random_document(rng, f"{split}-{i}", labels) for i in range(n))
    return Dataset(f"random-{seed}", labels, splits)
