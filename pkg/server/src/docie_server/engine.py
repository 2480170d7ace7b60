"""Request encoding and word-level scoring around the model.

The wire protocol speaks words; the model speaks hashed sub-word pieces.
The engine owns that boundary: it lays out [CLS] question [SEP] context
[SEP] (or [CLS] context [SEP] for tagging), repeats each word's box over its
pieces, and pools logits back to one value per word via each word's first
piece.  The CLS position doubles as the QA null slot.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .model import ModelConfig, ScoringModel
from .protocol import ProtocolViolation, ScoreRequest
from .tokenizer import CLS_ID, SEP_ID, HashTokenizer

ZERO_BOX = [0, 0, 0, 0]


@dataclass
class Encoded:
    ids: list[int]
    boxes: list[list[int]]
    segments: list[int]
    word_heads: list[int]  # absolute positions of context words' first pieces


class Engine:
    def __init__(self, model: ScoringModel, label_set: list[str] | None = None, device: str = "cpu"):
        self.device = torch.device(device)
        self.model = model.to(self.device)
        self.tokenizer = HashTokenizer(model.cfg.vocab_size)
        self.label_set = list(label_set) if label_set is not None else None
        # control-channel state, applied by any attached training loop
        self.lr = 2e-5
        self.stopped = False

    # --- encoding -------------------------------------------------------------

    def encode(self, context_words: list[str], context_boxes: list[list[int]],
               question: str | None = None) -> Encoded:
        ids = [CLS_ID]
        boxes = [list(ZERO_BOX)]
        segments = [0]
        if question is not None:
            for word in question.split():
                for pid in self.tokenizer.word_ids(word):
                    ids.append(pid)
                    boxes.append(list(ZERO_BOX))
                    segments.append(0)
            ids.append(SEP_ID)
            boxes.append(list(ZERO_BOX))
            segments.append(0)
        heads = []
        for word, box in zip(context_words, context_boxes):
            heads.append(len(ids))
            for pid in self.tokenizer.word_ids(word):
                ids.append(pid)
                boxes.append([min(max(int(c), 0), 1000) for c in box])
                segments.append(1)
        ids.append(SEP_ID)
        boxes.append(list(ZERO_BOX))
        segments.append(1)
        if len(ids) > self.model.cfg.max_len:
            raise ProtocolViolation(
                f"encoded length {len(ids)} exceeds server capacity {self.model.cfg.max_len}"
            )
        return Encoded(ids, boxes, segments, heads)

    def _tensors(self, enc: Encoded):
        ids = torch.tensor([enc.ids], dtype=torch.long, device=self.device)
        boxes = torch.tensor([enc.boxes], dtype=torch.long, device=self.device)
        segments = torch.tensor([enc.segments], dtype=torch.long, device=self.device)
        return ids, boxes, segments

    # --- scoring --------------------------------------------------------------

    def score_qa(self, request: ScoreRequest) -> tuple[tuple[float, float], list[float], list[float]]:
        enc = self.encode(request.tokens, request.boxes, question=request.question or "")
        self.model.eval()
        with torch.no_grad():
            starts, ends = self.model.qa_logits(*self._tensors(enc))
        starts = starts[0]
        ends = ends[0]
        null_slot = (float(starts[0]), float(ends[0]))
        word_starts = [float(starts[i]) for i in enc.word_heads]
        word_ends = [float(ends[i]) for i in enc.word_heads]
        return null_slot, word_starts, word_ends

    def score_tc(self, request: ScoreRequest) -> list[list[float]]:
        assert request.label_set is not None
        if self.label_set is not None and request.label_set != self.label_set:
            raise ProtocolViolation(
                f"request label_set {request.label_set!r} does not match server label_set {self.label_set!r}"
            )
        width = 2 * len(request.label_set) + 1
        if self.model.cfg.n_tags != width:
            raise ProtocolViolation(
                f"tagging head has {self.model.cfg.n_tags} outputs, request needs {width}"
            )
        enc = self.encode(request.tokens, request.boxes)
        self.model.eval()
        with torch.no_grad():
            logits = self.model.tag_logits(*self._tensors(enc))[0]
        return [[float(v) for v in logits[i]] for i in enc.word_heads]


def build_engine(
    label_set: list[str] | None = None,
    checkpoint: str | None = None,
    max_len: int = 512,
    seed: int = 0,
    device: str = "cpu",
) -> Engine:
    if checkpoint:
        from .model import load_model

        return Engine(load_model(checkpoint), label_set, device)
    n_tags = 2 * len(label_set) + 1 if label_set else 1
    model = ScoringModel(ModelConfig(max_len=max_len, n_tags=n_tags, seed=seed))
    return Engine(model, label_set, device)
