"""Scorer clients and the built-in mock scorers.

A scorer is anything that maps a chunk (plus question or label set) to
word-level logits.  The built-in oracles make the whole pipeline testable
without any neural model: the gold oracle emits logits that decode exactly
back to the gold annotations, the noisy oracle suppresses each entity with a
seeded probability, and the constant scorer emits one value everywhere.
"""

from __future__ import annotations

import shlex
import subprocess
import threading
import urllib.error
import urllib.request
from typing import Protocol, Sequence

from .decoding import QALogits
from .iob import encode, tag_vocabulary
from .model import Dataset, Document, Entity
from .protocol import (
    MODE_QA,
    MODE_TC,
    ErrorMessage,
    RemoteError,
    ScheduleAck,
    ScheduleMessage,
    SchemaError,
    ScoreRequest,
    ScoreResponse,
    TransportError,
    parse_message,
    serialize_message,
    validate_response,
)
from .seeding import stable_uniform

HIT_LOGIT = 5.0
MISS_LOGIT = -5.0
NULL_PRESENT = -10.0
NULL_ABSENT = 10.0


class Scorer(Protocol):
    def score(self, request: ScoreRequest) -> ScoreResponse: ...


class UnknownDocumentError(KeyError):
    pass


def request(scorer: Scorer, req: ScoreRequest) -> ScoreResponse:
    """Send one request and enforce the response contract."""
    return validate_response(req, scorer.score(req))


class GoldOracleScorer:
    """Emits logits that decode exactly to the gold entities of the dataset.

    QA: each gold answer start/end token gets a strong positive logit and the
    null slot stays low; when the chunk holds no answer for the label, the
    null slot dominates and every token logit is negative, so default
    extraction abstains.  TC: the encoded gold tag of every token wins the
    argmax.
    """

    def __init__(self, dataset: Dataset):
        self._docs: dict[str, Document] = {}
        for doc in dataset.documents():
            self._docs.setdefault(doc.id, doc)

    def _keeps(self, doc: Document, entity: Entity) -> bool:
        return True

    def _document(self, doc_id: str) -> Document:
        try:
            return self._docs[doc_id]
        except KeyError:
            raise UnknownDocumentError(doc_id) from None

    def score(self, req: ScoreRequest) -> ScoreResponse:
        doc = self._document(req.doc_id)
        n = len(req.tokens)
        chunk_end = req.chunk_start + n
        kept = [e for e in doc.entities if self._keeps(doc, e)]
        if req.mode == MODE_QA:
            inside = [
                e
                for e in kept
                if e.label == req.label and e.token_start >= req.chunk_start and e.token_end <= chunk_end
            ]
            start = [MISS_LOGIT] * n
            end = [MISS_LOGIT] * n
            if inside:
                null_slot = (NULL_PRESENT, NULL_PRESENT)
                for e in inside:
                    start[e.token_start - req.chunk_start] = HIT_LOGIT
                    end[e.token_end - 1 - req.chunk_start] = HIT_LOGIT
            else:
                null_slot = (NULL_ABSENT, NULL_ABSENT)
            return ScoreResponse(
                req.request_id, MODE_QA, qa_logits=QALogits(null_slot, tuple(start), tuple(end))
            )
        label_set = req.label_set or ()
        vocab = tag_vocabulary(label_set)
        index = {tag: i for i, tag in enumerate(vocab)}
        taggable = [e for e in kept if e.label in label_set]
        tags = encode(
            Document(doc.id, doc.tokens, doc.text, tuple(taggable)), label_set
        ).tags[req.chunk_start : chunk_end]
        rows = []
        for tag in tags:
            row = [MISS_LOGIT] * len(vocab)
            row[index[tag]] = HIT_LOGIT
            rows.append(tuple(row))
        return ScoreResponse(req.request_id, MODE_TC, tag_logits=tuple(rows))


class NoisyOracleScorer(GoldOracleScorer):
    """Gold oracle that forgets each entity independently with ``drop_prob``.

    The decision stream is keyed by (seed, doc id, entity), so one entity gets
    the same fate in every chunk and every request that sees it.
    """

    def __init__(self, dataset: Dataset, drop_prob: float, seed: int):
        super().__init__(dataset)
        if not 0.0 <= drop_prob <= 1.0:
            raise ValueError(f"drop_prob must be in [0, 1], got {drop_prob}")
        self._drop_prob = drop_prob
        self._seed = seed

    def _keeps(self, doc: Document, entity: Entity) -> bool:
        u = stable_uniform(
            self._seed, "noisy-oracle", doc.id, entity.label, entity.token_start, entity.token_len
        )
        return u >= self._drop_prob


class ConstantScorer:
    """Emits the given value for every logit, including the null slot."""

    def __init__(self, value: float):
        self._value = value

    def score(self, req: ScoreRequest) -> ScoreResponse:
        n = len(req.tokens)
        v = self._value
        if req.mode == MODE_QA:
            logits = QALogits((v, v), tuple([v] * n), tuple([v] * n))
            return ScoreResponse(req.request_id, MODE_QA, qa_logits=logits)
        width = 2 * len(req.label_set or ()) + 1
        return ScoreResponse(req.request_id, MODE_TC, tag_logits=tuple(tuple([v] * width) for _ in range(n)))


def _raise_for_message(msg: object, expected: type) -> None:
    if isinstance(msg, ErrorMessage):
        raise RemoteError(msg.message)
    if not isinstance(msg, expected):
        raise SchemaError(f"expected {expected.__name__}, got {type(msg).__name__}")


class StdioScorerClient:
    """Talks the newline-delimited protocol to a child process."""

    def __init__(self, command: Sequence[str] | str):
        if isinstance(command, str):
            command = shlex.split(command)
        self._command = list(command)
        try:
            self._proc = subprocess.Popen(
                self._command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
            )
        except OSError as exc:
            raise TransportError(f"failed to start scorer process: {exc}") from exc
        self._lock = threading.Lock()

    def _roundtrip(self, line: str) -> object:
        with self._lock:
            try:
                assert self._proc.stdin is not None and self._proc.stdout is not None
                self._proc.stdin.write(line + "\n")
                self._proc.stdin.flush()
                reply = self._proc.stdout.readline()
            except (BrokenPipeError, OSError) as exc:
                raise TransportError(f"scorer process pipe failed: {exc}") from exc
        if not reply:
            raise TransportError("scorer process closed its output stream")
        return parse_message(reply)

    def score(self, req: ScoreRequest) -> ScoreResponse:
        msg = self._roundtrip(serialize_message(req))
        _raise_for_message(msg, ScoreResponse)
        return msg  # type: ignore[return-value]

    def schedule(self, decision: ScheduleMessage) -> ScheduleAck:
        msg = self._roundtrip(serialize_message(decision))
        _raise_for_message(msg, ScheduleAck)
        return msg  # type: ignore[return-value]

    def close(self) -> None:
        if self._proc.stdin is not None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()

    def __enter__(self) -> "StdioScorerClient":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()


class HttpScorerClient:
    """POSTs one protocol message per request to a scorer endpoint."""

    def __init__(self, url: str, max_in_flight: int = 4, timeout: float = 60.0):
        self._url = url
        self._timeout = timeout
        self._slots = threading.Semaphore(max_in_flight)

    def _roundtrip(self, line: str) -> object:
        req = urllib.request.Request(
            self._url,
            data=(line + "\n").encode("utf-8"),
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        with self._slots:
            try:
                with urllib.request.urlopen(req, timeout=self._timeout) as resp:
                    body = resp.read().decode("utf-8")
            except urllib.error.HTTPError as exc:
                body = exc.read().decode("utf-8", errors="replace")
                try:
                    msg = parse_message(body)
                except SchemaError:
                    raise TransportError(f"HTTP {exc.code} from scorer endpoint") from exc
                _raise_for_message(msg, ScoreResponse)
                raise TransportError(f"HTTP {exc.code} from scorer endpoint") from exc
            except urllib.error.URLError as exc:
                raise TransportError(f"scorer endpoint unreachable: {exc.reason}") from exc
        return parse_message(body)

    def score(self, req: ScoreRequest) -> ScoreResponse:
        msg = self._roundtrip(serialize_message(req))
        _raise_for_message(msg, ScoreResponse)
        return msg  # type: ignore[return-value]

    def schedule(self, decision: ScheduleMessage) -> ScheduleAck:
        msg = self._roundtrip(serialize_message(decision))
        _raise_for_message(msg, ScheduleAck)
        return msg  # type: ignore[return-value]

    def close(self) -> None:
        pass

    def __enter__(self) -> "HttpScorerClient":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()


def gold_oracle(dataset: Dataset) -> GoldOracleScorer:
    return GoldOracleScorer(dataset)


def noisy_oracle(dataset: Dataset, drop_prob: float, seed: int) -> NoisyOracleScorer:
    return NoisyOracleScorer(dataset, drop_prob, seed)


def constant(value: float) -> ConstantScorer:
    return ConstantScorer(value)
