"""End-to-end prediction over a split: chunk, score, decode, aggregate.

Both task framings share this path; they differ only in how a chunk's logits
become spans.  Predictions come back per document so the metrics module can
tally them against gold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from . import iob, metrics, qa
from .chunking import Chunk, ChunkSpec, chunk
from .decoding import (
    ExtractConfig,
    ScoredPrediction,
    aggregate,
    decode_tc,
    entities_to_predictions,
    extract_spans,
    predictions_to_entities,
    spans_to_predictions,
)
from .model import Document, Entity
from .protocol import MODE_QA, MODE_TC, ScoreRequest
from .scorer import Scorer, request


@dataclass(frozen=True)
class PipelineConfig:
    mode: str  # "qa" | "tc"
    chunk_spec: ChunkSpec
    extract: ExtractConfig = ExtractConfig()
    policy: iob.RepairPolicy = iob.BEGIN_ON_ORPHAN
    template: str = qa.DEFAULT_TEMPLATE

    def __post_init__(self) -> None:
        if self.mode not in (MODE_QA, MODE_TC):
            raise ValueError(f"unknown mode {self.mode!r}")


def chunk_request(doc: Document, chunk_: Chunk, mode: str, **fields) -> ScoreRequest:
    tokens = doc.tokens[chunk_.start : chunk_.end]
    request_id = f"{doc.id}:{chunk_.index}:{fields.get('label', 'tc')}"
    return ScoreRequest(
        request_id=request_id,
        mode=mode,
        doc_id=doc.id,
        chunk_start=chunk_.start,
        tokens=tuple(t.text for t in tokens),
        boxes=tuple(t.box for t in tokens),
        pages=tuple(t.page for t in tokens),
        **fields,
    )


def predict_document(
    doc: Document,
    labels: Sequence[str],
    scorer: Scorer,
    cfg: PipelineConfig,
) -> list[Entity]:
    """Predicted entities for one document, aggregated across chunks."""
    chunks = chunk(doc, cfg.chunk_spec)
    predictions: list[ScoredPrediction] = []
    for chunk_ in chunks:
        tokens = [t.text for t in doc.tokens[chunk_.start : chunk_.end]]
        if cfg.mode == MODE_QA:
            for label in labels:
                question = qa.label_to_question(label, cfg.template)
                req = chunk_request(doc, chunk_, MODE_QA, question=question, label=label)
                resp = request(scorer, req)
                assert resp.qa_logits is not None
                spans = extract_spans(resp.qa_logits, cfg.extract, tokens)
                predictions.extend(spans_to_predictions(chunk_, label, spans))
        else:
            req = chunk_request(doc, chunk_, MODE_TC, label_set=tuple(labels))
            resp = request(scorer, req)
            assert resp.tag_logits is not None
            entities = decode_tc(resp.tag_logits, labels, cfg.policy, tokens)
            predictions.extend(entities_to_predictions(chunk_, entities))
    return predictions_to_entities(aggregate(predictions))


def predict_split(
    docs: Sequence[Document],
    labels: Sequence[str],
    scorer: Scorer,
    cfg: PipelineConfig,
) -> dict[str, list[Entity]]:
    return {doc.id: predict_document(doc, labels, scorer, cfg) for doc in docs}


def evaluate_split(
    docs: Sequence[Document],
    labels: Sequence[str],
    scorer: Scorer,
    cfg: PipelineConfig,
    match_mode: str,
) -> metrics.Report:
    """Score the split's predictions against its gold entities.

    Gold is restricted to the evaluated labels so that label-override runs
    (asking about classes the dataset may not contain) stay well-defined.
    """
    label_filter = set(labels)
    gold = {doc.id: [e for e in doc.entities if e.label in label_filter] for doc in docs}
    predictions = predict_split(docs, labels, scorer, cfg)
    return metrics.score(predictions, gold, match_mode=match_mode, label_set=labels)
