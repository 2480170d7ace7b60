"""Wire protocol between the harness and model scorers.

Messages are single-line UTF-8 JSON objects, one per line, each carrying a
``protocol`` version field.  The same payloads travel over a child process's
standard streams or as HTTP POST bodies.  Logits are word-level: one start
and end logit per chunk context token (servers pool sub-token logits before
answering), plus a dedicated no-answer slot.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .decoding import QALogits
from .model import Box

PROTOCOL_VERSION = 1

MODE_QA = "qa"
MODE_TC = "tc"


class ScorerError(Exception):
    """Base class for everything that can go wrong talking to a scorer."""


class TransportError(ScorerError):
    """The scorer process or endpoint could not be reached or died mid-call."""


class SchemaError(ScorerError):
    """A message violated the wire schema."""


class LengthMismatchError(ScorerError):
    """A response's logit lengths do not match the request's token count."""


class RemoteError(ScorerError):
    """The scorer answered with an error message."""


@dataclass(frozen=True)
class ScoreRequest:
    request_id: str
    mode: str
    doc_id: str
    chunk_start: int
    tokens: tuple[str, ...]
    boxes: tuple[Box, ...]
    pages: tuple[int, ...]
    question: str | None = None  # qa mode only
    label: str | None = None  # qa mode only; metadata for oracle scorers
    label_set: tuple[str, ...] | None = None  # tc mode only

    def __post_init__(self) -> None:
        if self.mode not in (MODE_QA, MODE_TC):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not (len(self.tokens) == len(self.boxes) == len(self.pages)):
            raise ValueError("tokens, boxes, and pages must have equal length")
        if self.mode == MODE_QA and (self.question is None or self.label is None or self.label_set is not None):
            raise ValueError("qa requests carry question and label, never label_set")
        if self.mode == MODE_TC and (self.label_set is None or self.question is not None or self.label is not None):
            raise ValueError("tc requests carry label_set, never question or label")


@dataclass(frozen=True)
class ScoreResponse:
    request_id: str
    mode: str
    qa_logits: QALogits | None = None  # qa mode only
    tag_logits: tuple[tuple[float, ...], ...] | None = None  # tc mode only

    def __post_init__(self) -> None:
        if self.mode == MODE_QA and (self.qa_logits is None or self.tag_logits is not None):
            raise ValueError("qa responses carry qa logits only")
        if self.mode == MODE_TC and (self.tag_logits is None or self.qa_logits is not None):
            raise ValueError("tc responses carry tag logits only")


@dataclass(frozen=True)
class ScheduleMessage:
    """Control-channel decision sent to a training server: new lr, or stop."""

    request_id: str
    lr: float
    stopped: bool


@dataclass(frozen=True)
class ScheduleAck:
    request_id: str
    lr: float
    stopped: bool


@dataclass(frozen=True)
class ErrorMessage:
    message: str
    request_id: str | None = None


Message = ScoreRequest | ScoreResponse | ScheduleMessage | ScheduleAck | ErrorMessage


def serialize_message(message: Message) -> str:
    """Canonical single-line JSON form of a message."""
    payload: dict = {"protocol": PROTOCOL_VERSION}
    if isinstance(message, ScoreRequest):
        payload.update(
            kind="score_request",
            request_id=message.request_id,
            mode=message.mode,
            doc_id=message.doc_id,
            chunk_start=message.chunk_start,
            tokens=list(message.tokens),
            boxes=[list(b) for b in message.boxes],
            pages=list(message.pages),
        )
        if message.mode == MODE_QA:
            payload["question"] = message.question
            payload["label"] = message.label
        else:
            payload["label_set"] = list(message.label_set or ())
    elif isinstance(message, ScoreResponse):
        payload.update(kind="score_response", request_id=message.request_id, mode=message.mode)
        if message.mode == MODE_QA:
            assert message.qa_logits is not None
            payload["null_slot"] = list(message.qa_logits.null_slot)
            payload["start_logits"] = list(message.qa_logits.start_logits)
            payload["end_logits"] = list(message.qa_logits.end_logits)
        else:
            payload["tag_logits"] = [list(row) for row in message.tag_logits or ()]
    elif isinstance(message, ScheduleMessage):
        payload.update(kind="schedule", request_id=message.request_id, lr=message.lr, stopped=message.stopped)
    elif isinstance(message, ScheduleAck):
        payload.update(kind="schedule_ack", request_id=message.request_id, lr=message.lr, stopped=message.stopped)
    elif isinstance(message, ErrorMessage):
        payload.update(kind="error", request_id=message.request_id, message=message.message)
    else:
        raise TypeError(f"not a protocol message: {message!r}")
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _require(obj: dict, key: str, types: type | tuple) -> object:
    if key not in obj:
        raise SchemaError(f"missing field {key!r}")
    value = obj[key]
    allowed = types if isinstance(types, tuple) else (types,)
    if isinstance(value, bool) and bool not in allowed:
        raise SchemaError(f"field {key!r} has wrong type bool")
    if not isinstance(value, types):
        raise SchemaError(f"field {key!r} has wrong type {type(value).__name__}")
    return value


def _float_list(obj: dict, key: str) -> tuple[float, ...]:
    raw = _require(obj, key, list)
    out = []
    for v in raw:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise SchemaError(f"field {key!r} must contain numbers")
        out.append(float(v))
    return tuple(out)


def _str_list(obj: dict, key: str) -> tuple[str, ...]:
    raw = _require(obj, key, list)
    if not all(isinstance(v, str) for v in raw):
        raise SchemaError(f"field {key!r} must contain strings")
    return tuple(raw)


def _parse_boxes(obj: dict) -> tuple[Box, ...]:
    raw = _require(obj, "boxes", list)
    boxes = []
    for b in raw:
        if not (isinstance(b, list) and len(b) == 4 and all(isinstance(c, int) for c in b)):
            raise SchemaError("each box must be a list of four integers")
        boxes.append(tuple(b))
    return tuple(boxes)


def parse_message(line: str) -> Message:
    """Parse one wire line; raises ``SchemaError`` on any violation."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise SchemaError("message must be a JSON object")
    version = _require(obj, "protocol", int)
    if version != PROTOCOL_VERSION:
        raise SchemaError(f"unsupported protocol version {version}")
    kind = _require(obj, "kind", str)
    try:
        if kind == "score_request":
            mode = _require(obj, "mode", str)
            common = dict(
                request_id=_require(obj, "request_id", str),
                mode=mode,
                doc_id=_require(obj, "doc_id", str),
                chunk_start=_require(obj, "chunk_start", int),
                tokens=_str_list(obj, "tokens"),
                boxes=_parse_boxes(obj),
                pages=tuple(_require(obj, "pages", list)),
            )
            if not all(isinstance(p, int) and not isinstance(p, bool) for p in common["pages"]):
                raise SchemaError("pages must contain integers")
            if mode == MODE_QA:
                return ScoreRequest(
                    question=str(_require(obj, "question", str)),
                    label=str(_require(obj, "label", str)),
                    **common,
                )
            if mode == MODE_TC:
                return ScoreRequest(label_set=_str_list(obj, "label_set"), **common)
            raise SchemaError(f"unknown mode {mode!r}")
        if kind == "score_response":
            mode = _require(obj, "mode", str)
            request_id = _require(obj, "request_id", str)
            if mode == MODE_QA:
                null_slot = _float_list(obj, "null_slot")
                if len(null_slot) != 2:
                    raise SchemaError("null_slot must hold exactly two logits")
                logits = QALogits(
                    (null_slot[0], null_slot[1]),
                    _float_list(obj, "start_logits"),
                    _float_list(obj, "end_logits"),
                )
                return ScoreResponse(request_id, mode, qa_logits=logits)
            if mode == MODE_TC:
                raw = _require(obj, "tag_logits", list)
                rows = []
                for row in raw:
                    if not isinstance(row, list):
                        raise SchemaError("tag_logits must be a list of rows")
                    rows.append(tuple(float(v) for v in row))
                return ScoreResponse(request_id, mode, tag_logits=tuple(rows))
            raise SchemaError(f"unknown mode {mode!r}")
        if kind == "schedule":
            return ScheduleMessage(
                request_id=_require(obj, "request_id", str),
                lr=float(_require(obj, "lr", (int, float))),
                stopped=bool(_require(obj, "stopped", bool)),
            )
        if kind == "schedule_ack":
            return ScheduleAck(
                request_id=_require(obj, "request_id", str),
                lr=float(_require(obj, "lr", (int, float))),
                stopped=bool(_require(obj, "stopped", bool)),
            )
        if kind == "error":
            request_id = obj.get("request_id")
            if request_id is not None and not isinstance(request_id, str):
                raise SchemaError("error request_id must be a string or null")
            return ErrorMessage(message=str(_require(obj, "message", str)), request_id=request_id)
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc
    raise SchemaError(f"unknown message kind {kind!r}")


def validate_response(request: ScoreRequest, response: ScoreResponse) -> ScoreResponse:
    """Enforce id agreement and the word-level length contract."""
    if response.request_id != request.request_id:
        raise SchemaError(
            f"response id {response.request_id!r} does not match request id {request.request_id!r}"
        )
    if response.mode != request.mode:
        raise SchemaError(f"response mode {response.mode!r} does not match request mode {request.mode!r}")
    n = len(request.tokens)
    if request.mode == MODE_QA:
        assert response.qa_logits is not None
        if len(response.qa_logits) != n:
            raise LengthMismatchError(f"expected {n} start/end logits, got {len(response.qa_logits)}")
    else:
        assert response.tag_logits is not None
        if len(response.tag_logits) != n:
            raise LengthMismatchError(f"expected {n} tag logit rows, got {len(response.tag_logits)}")
        width = 2 * len(request.label_set or ()) + 1
        for i, row in enumerate(response.tag_logits):
            if len(row) != width:
                raise LengthMismatchError(f"tag logit row {i} has length {len(row)}, expected {width}")
    return response
