"""Tiny layout-aware transformer backbone with QA and token-tagging heads.

Embeddings sum word-piece, 1D position, segment (question vs context), and
the four quantized box coordinates, so geometry reaches the encoder the same
way text does.  Heads: start/end logits per sub-token for extractive QA (the
CLS position doubles as the no-answer slot) and a per-sub-token tag
distribution for IOB token classification.  Sized for CPU: the default
configuration trains in seconds on fixture data.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

BOX_BUCKETS = 1001  # normalized coordinates 0..1000


@dataclass
class ModelConfig:
    vocab_size: int = 1024
    hidden: int = 48
    heads: int = 4
    layers: int = 2
    feedforward: int = 96
    max_len: int = 512
    dropout: float = 0.1
    n_tags: int = 1  # 2 * |label_set| + 1 when the tagging head is used
    seed: int = 0


class LayoutBackbone(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.word_emb = nn.Embedding(cfg.vocab_size, cfg.hidden, padding_idx=0)
        self.pos_emb = nn.Embedding(cfg.max_len, cfg.hidden)
        self.segment_emb = nn.Embedding(2, cfg.hidden)
        self.x0_emb = nn.Embedding(BOX_BUCKETS, cfg.hidden)
        self.y0_emb = nn.Embedding(BOX_BUCKETS, cfg.hidden)
        self.x1_emb = nn.Embedding(BOX_BUCKETS, cfg.hidden)
        self.y1_emb = nn.Embedding(BOX_BUCKETS, cfg.hidden)
        self.norm = nn.LayerNorm(cfg.hidden)
        self.dropout = nn.Dropout(cfg.dropout)
        layer = nn.TransformerEncoderLayer(
            d_model=cfg.hidden,
            nhead=cfg.heads,
            dim_feedforward=cfg.feedforward,
            dropout=cfg.dropout,
            batch_first=True,
        )
        # nested-tensor fast path disabled: keeps padded inference deterministic
        self.encoder = nn.TransformerEncoder(layer, num_layers=cfg.layers, enable_nested_tensor=False)

    def forward(self, ids: torch.Tensor, boxes: torch.Tensor, segments: torch.Tensor) -> torch.Tensor:
        # ids: (B, L)  boxes: (B, L, 4)  segments: (B, L)
        length = ids.shape[1]
        positions = torch.arange(length, device=ids.device).unsqueeze(0).expand_as(ids)
        x = (
            self.word_emb(ids)
            + self.pos_emb(positions)
            + self.segment_emb(segments)
            + self.x0_emb(boxes[..., 0])
            + self.y0_emb(boxes[..., 1])
            + self.x1_emb(boxes[..., 2])
            + self.y1_emb(boxes[..., 3])
        )
        x = self.dropout(self.norm(x))
        mask = ids.eq(0)
        return self.encoder(x, src_key_padding_mask=mask)


class ScoringModel(nn.Module):
    """Backbone plus both task heads; either head can be used per request."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        torch.manual_seed(cfg.seed)
        self.cfg = cfg
        self.backbone = LayoutBackbone(cfg)
        self.qa_head = nn.Linear(cfg.hidden, 2)
        self.tag_head = nn.Linear(cfg.hidden, cfg.n_tags)

    def qa_logits(self, ids, boxes, segments) -> tuple[torch.Tensor, torch.Tensor]:
        hidden = self.backbone(ids, boxes, segments)
        logits = self.qa_head(hidden)
        return logits[..., 0], logits[..., 1]  # start, end: (B, L)

    def tag_logits(self, ids, boxes, segments) -> torch.Tensor:
        hidden = self.backbone(ids, boxes, segments)
        return self.tag_head(hidden)  # (B, L, n_tags)


def save_model(model: ScoringModel, path: str) -> None:
    torch.save({"config": vars(model.cfg), "state": model.state_dict()}, path)


def load_model(path: str) -> ScoringModel:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    model = ScoringModel(ModelConfig(**payload["config"]))
    model.load_state_dict(payload["state"])
    model.eval()
    return model
