"""Reference scorer for the docie wire protocol.

A tiny layout-aware transformer (word pieces + box coordinate embeddings)
with extractive-QA and IOB-tagging heads, served over stdio or HTTP, plus a
fine-tuning entrypoint that logs per-epoch validation F1 and honors
learning-rate schedule decisions arriving over the control channel.
"""

from .engine import Engine, build_engine
from .finetune import TrainConfig, finetune
from .model import ModelConfig, ScoringModel
from .server import make_http_server, serve_stdio

__version__ = "0.1.0"

__all__ = [
    "Engine",
    "ModelConfig",
    "ScoringModel",
    "TrainConfig",
    "build_engine",
    "finetune",
    "make_http_server",
    "serve_stdio",
]
