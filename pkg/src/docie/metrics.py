"""Entity-level precision/recall/F1 per label with support-weighted averages."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Mapping, Sequence

from .model import Entity

SPAN = "span"
TEXT = "text"


@dataclass(frozen=True)
class LabelMetrics:
    label: str
    true_positives: int
    false_positives: int
    false_negatives: int
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class Report:
    per_label: tuple[LabelMetrics, ...]
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float

    @property
    def weighted_avg(self) -> tuple[float, float, float]:
        return (self.weighted_precision, self.weighted_recall, self.weighted_f1)


def normalize_text(text: str) -> str:
    """Whitespace-collapsed, case-folded form used by text-mode matching."""
    return " ".join(text.split()).casefold()


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def _matches(pred: Entity, gold: Entity, match_mode: str) -> bool:
    if pred.label != gold.label:
        return False
    if match_mode == SPAN:
        return pred.token_start == gold.token_start and pred.token_len == gold.token_len
    return normalize_text(pred.text) == normalize_text(gold.text)


def score(
    predictions: Mapping[str, Sequence[Entity]],
    gold: Mapping[str, Sequence[Entity]],
    match_mode: str = SPAN,
    label_set: Sequence[str] | None = None,
) -> Report:
    """Tally matches per label over per-document entity lists.

    A prediction matches a gold entity when labels agree and, depending on
    ``match_mode``, token ranges are identical (span) or normalized texts are
    identical (text).  Each gold entity is matched at most once, greedily in
    document order, so duplicate predictions count one tp and the rest fp.
    """
    if match_mode not in (SPAN, TEXT):
        raise ValueError(f"unknown match mode {match_mode!r}")
    tp: dict[str, int] = {}
    fp: dict[str, int] = {}
    fn: dict[str, int] = {}
    support: dict[str, int] = {}
    doc_ids = list(gold) + [d for d in predictions if d not in gold]
    for doc_id in doc_ids:
        gold_entities = list(gold.get(doc_id, ()))
        matched = [False] * len(gold_entities)
        for pred in predictions.get(doc_id, ()):
            hit = False
            for j, g in enumerate(gold_entities):
                if matched[j] or not _matches(pred, g, match_mode):
                    continue
                matched[j] = True
                tp[pred.label] = tp.get(pred.label, 0) + 1
                hit = True
                break
            if not hit:
                fp[pred.label] = fp.get(pred.label, 0) + 1
        for j, g in enumerate(gold_entities):
            support[g.label] = support.get(g.label, 0) + 1
            if not matched[j]:
                fn[g.label] = fn.get(g.label, 0) + 1
    labels = list(label_set) if label_set is not None else sorted(set(tp) | set(fp) | set(fn) | set(support))
    rows: list[LabelMetrics] = []
    for label in labels:
        t, p_, n_ = tp.get(label, 0), fp.get(label, 0), fn.get(label, 0)
        precision, recall, f1 = _prf(t, p_, n_)
        rows.append(LabelMetrics(label, t, p_, n_, precision, recall, f1, support.get(label, 0)))
    total_support = sum(r.support for r in rows)
    if total_support:
        wp = sum(r.precision * r.support for r in rows) / total_support
        wr = sum(r.recall * r.support for r in rows) / total_support
        wf = sum(r.f1 * r.support for r in rows) / total_support
    else:
        wp = wr = wf = 0.0
    return Report(tuple(rows), wp, wr, wf)


CSV_COLUMNS = ["label", "tp", "fp", "fn", "precision", "recall", "f1", "support"]


def to_csv(report: Report) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in report.per_label:
        writer.writerow(
            [r.label, r.true_positives, r.false_positives, r.false_negatives,
             f"{r.precision:.4f}", f"{r.recall:.4f}", f"{r.f1:.4f}", r.support]
        )
    writer.writerow(
        ["weighted_avg", "", "", "", f"{report.weighted_precision:.4f}",
         f"{report.weighted_recall:.4f}", f"{report.weighted_f1:.4f}",
         sum(r.support for r in report.per_label)]
    )
    return buf.getvalue()


def to_markdown(report: Report) -> str:
    lines = [
        "| Label | F1 | Precision | Recall | Support |",
        "|---|---|---|---|---|",
    ]
    for r in report.per_label:
        lines.append(f"| {r.label} | {r.f1:.4f} | {r.precision:.4f} | {r.recall:.4f} | {r.support} |")
    lines.append(
        f"| **weighted average** | {report.weighted_f1:.4f} | {report.weighted_precision:.4f} "
        f"| {report.weighted_recall:.4f} | {sum(r.support for r in report.per_label)} |"
    )
    return "\n".join(lines) + "\n"
