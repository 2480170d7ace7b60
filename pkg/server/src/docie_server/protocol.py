"""Server-side wire protocol handling, written against PROTOCOL.md.

The server depends on the documented message shapes only; it shares no code
with the harness.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

PROTOCOL_VERSION = 1


class ProtocolViolation(ValueError):
    pass


@dataclass(frozen=True)
class ScoreRequest:
    request_id: str
    mode: str
    doc_id: str
    chunk_start: int
    tokens: list[str]
    boxes: list[list[int]]
    pages: list[int]
    question: str | None = None
    label: str | None = None
    label_set: list[str] | None = None


@dataclass(frozen=True)
class Schedule:
    request_id: str
    lr: float
    stopped: bool


def _need(obj: dict, key: str):
    if key not in obj:
        raise ProtocolViolation(f"missing field {key!r}")
    return obj[key]


def parse_line(line: str) -> ScoreRequest | Schedule:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolViolation(f"invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ProtocolViolation("message must be a JSON object")
    if obj.get("protocol") != PROTOCOL_VERSION:
        raise ProtocolViolation(f"unsupported protocol version {obj.get('protocol')!r}")
    kind = _need(obj, "kind")
    if kind == "schedule":
        return Schedule(str(_need(obj, "request_id")), float(_need(obj, "lr")), bool(_need(obj, "stopped")))
    if kind != "score_request":
        raise ProtocolViolation(f"server cannot handle message kind {kind!r}")
    mode = _need(obj, "mode")
    if mode not in ("qa", "tc"):
        raise ProtocolViolation(f"unknown mode {mode!r}")
    tokens = _need(obj, "tokens")
    boxes = _need(obj, "boxes")
    pages = _need(obj, "pages")
    if not (isinstance(tokens, list) and isinstance(boxes, list) and isinstance(pages, list)):
        raise ProtocolViolation("tokens, boxes, and pages must be lists")
    if not (len(tokens) == len(boxes) == len(pages)):
        raise ProtocolViolation("tokens, boxes, and pages must have equal length")
    for box in boxes:
        if not (isinstance(box, list) and len(box) == 4):
            raise ProtocolViolation("each box must be a list of four integers")
    request = ScoreRequest(
        request_id=str(_need(obj, "request_id")),
        mode=mode,
        doc_id=str(_need(obj, "doc_id")),
        chunk_start=int(_need(obj, "chunk_start")),
        tokens=[str(t) for t in tokens],
        boxes=[[int(c) for c in box] for box in boxes],
        pages=[int(p) for p in pages],
        question=obj.get("question"),
        label=obj.get("label"),
        label_set=list(obj["label_set"]) if "label_set" in obj else None,
    )
    if mode == "qa" and request.question is None:
        raise ProtocolViolation("qa requests must carry a question")
    if mode == "tc" and request.label_set is None:
        raise ProtocolViolation("tc requests must carry a label_set")
    return request


def qa_response(request_id: str, null_slot: tuple[float, float],
                start_logits: list[float], end_logits: list[float]) -> str:
    return json.dumps(
        {
            "protocol": PROTOCOL_VERSION,
            "kind": "score_response",
            "request_id": request_id,
            "mode": "qa",
            "null_slot": list(null_slot),
            "start_logits": start_logits,
            "end_logits": end_logits,
        },
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
    )


def tc_response(request_id: str, tag_logits: list[list[float]]) -> str:
    return json.dumps(
        {
            "protocol": PROTOCOL_VERSION,
            "kind": "score_response",
            "request_id": request_id,
            "mode": "tc",
            "tag_logits": tag_logits,
        },
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
    )


def schedule_ack(request_id: str, lr: float, stopped: bool) -> str:
    return json.dumps(
        {
            "protocol": PROTOCOL_VERSION,
            "kind": "schedule_ack",
            "request_id": request_id,
            "lr": lr,
            "stopped": stopped,
        },
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
    )


def error_line(message: str, request_id: str | None = None) -> str:
    return json.dumps(
        {
            "protocol": PROTOCOL_VERSION,
            "kind": "error",
            "request_id": request_id,
            "message": message,
        },
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
    )
