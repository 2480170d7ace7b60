from __future__ import annotations

import threading
import urllib.request

import pytest

from docie_server.engine import build_engine
from docie_server.protocol import ProtocolViolation, ScoreRequest, parse_line
from docie_server.server import handle_line, make_http_server
from docie_server.tokenizer import HashTokenizer


def qa_request(n: int = 5, request_id: str = "r") -> ScoreRequest:
    return ScoreRequest(
        request_id=request_id, mode="qa", doc_id="d", chunk_start=0,
        tokens=[f"word{i}" for i in range(n)],
        boxes=[[i, 0, i + 5, 10] for i in range(n)],
        pages=[0] * n,
        question="What is the company?", label="company",
    )


def tc_request(n: int = 5, labels=("company", "date")) -> ScoreRequest:
    return ScoreRequest(
        request_id="r2", mode="tc", doc_id="d", chunk_start=0,
        tokens=[f"word{i}" for i in range(n)],
        boxes=[[i, 0, i + 5, 10] for i in range(n)],
        pages=[0] * n,
        label_set=list(labels),
    )


@pytest.fixture(scope="module")
def engine():
    return build_engine(["company", "date"], max_len=128)


def test_qa_shapes_match_any_token_count(engine):
    for n in (1, 3, 9):
        null_slot, starts, ends = engine.score_qa(qa_request(n))
        assert len(starts) == len(ends) == n
        assert len(null_slot) == 2


def test_tc_shapes(engine):
    rows = engine.score_tc(tc_request(7))
    assert len(rows) == 7
    assert all(len(r) == 5 for r in rows)


def test_inference_is_deterministic(engine):
    a = engine.score_qa(qa_request(6))
    b = engine.score_qa(qa_request(6))
    assert a == b


def test_fresh_engine_same_seed_same_logits():
    a = build_engine(["x"], max_len=64, seed=3).score_qa(qa_request(4))
    b = build_engine(["x"], max_len=64, seed=3).score_qa(qa_request(4))
    assert a == b


def test_capacity_exceeded_is_protocol_violation():
    small = build_engine(["x"], max_len=16)
    with pytest.raises(ProtocolViolation, match="capacity"):
        small.score_qa(qa_request(40))


def test_tokenizer_word_heads_are_stable():
    tok = HashTokenizer(512)
    enc = tok.encode_words(["alpha", "be", "gammagamma"])
    assert len(enc.word_heads) == 3
    assert enc.word_heads[0] == 0
    assert tok.encode_words(["alpha", "be", "gammagamma"]) == enc
    # pieces of a long word stay contiguous
    assert enc.word_heads[2] - enc.word_heads[1] == len(tok.word_ids("be"))


def test_schedule_updates_engine_state(engine):
    line = ('{"protocol": 1, "kind": "schedule", "request_id": "s1", '
            '"lr": 5e-06, "stopped": true}')
    ok, reply = handle_line(engine, line)
    assert ok
    assert engine.lr == 5e-06
    assert engine.stopped is True
    engine.stopped = False  # restore for other tests


def test_http_transport(engine):
    server = make_http_server(engine)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        host, port = server.server_address
        import json

        body = json.dumps({
            "protocol": 1, "kind": "score_request", "request_id": "h1", "mode": "qa",
            "doc_id": "d", "chunk_start": 0, "tokens": ["a", "b"],
            "boxes": [[0, 0, 1, 1]] * 2, "pages": [0, 0],
            "question": "What is the date?", "label": "date",
        }).encode("utf-8")
        req = urllib.request.Request(f"http://{host}:{port}/", data=body,
                                     headers={"Content-Type": "application/json"})
        with urllib.request.urlopen(req, timeout=30) as resp:
            reply = json.loads(resp.read().decode("utf-8"))
        assert reply["kind"] == "score_response"
        assert len(reply["start_logits"]) == 2
    finally:
        server.shutdown()


def test_parse_line_rejects_unknown_kind():
    with pytest.raises(ProtocolViolation):
        parse_line('{"protocol": 1, "kind": "score_response", "request_id": "x"}')
