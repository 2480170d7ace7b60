from __future__ import annotations

import json
import sys
import threading

import pytest
from hypothesis import given, settings, strategies as st

from docie.chunking import ChunkSpec
from docie.dataset_io import save
from docie.decoding import QALogits
from docie.metrics import TEXT
from docie.oracle_server import build_scorer, handle_line, make_http_server
from docie.pipeline import PipelineConfig, evaluate_split
from docie.protocol import (
    MODE_QA,
    MODE_TC,
    ErrorMessage,
    LengthMismatchError,
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
from docie.scorer import (
    HttpScorerClient,
    StdioScorerClient,
    UnknownDocumentError,
    constant,
    gold_oracle,
    noisy_oracle,
    request,
)

from helpers import receipt_dataset, tiny_dataset


def qa_request(doc_id="doc-1", chunk_start=0, n=8, label="company", request_id="r1") -> ScoreRequest:
    return ScoreRequest(
        request_id=request_id,
        mode=MODE_QA,
        doc_id=doc_id,
        chunk_start=chunk_start,
        tokens=tuple(f"t{i}" for i in range(n)),
        boxes=tuple((0, 0, 10, 10) for _ in range(n)),
        pages=tuple(0 for _ in range(n)),
        question=f"What is the {label}?",
        label=label,
    )


def tc_request(doc_id="doc-1", chunk_start=0, n=8, labels=("company", "address", "total", "date")) -> ScoreRequest:
    return ScoreRequest(
        request_id="r2",
        mode=MODE_TC,
        doc_id=doc_id,
        chunk_start=chunk_start,
        tokens=tuple(f"t{i}" for i in range(n)),
        boxes=tuple((0, 0, 10, 10) for _ in range(n)),
        pages=tuple(0 for _ in range(n)),
        label_set=tuple(labels),
    )


# --- message schema ---------------------------------------------------------------


def test_mode_specific_fields_enforced():
    with pytest.raises(ValueError):
        ScoreRequest("r", MODE_QA, "d", 0, ("a",), ((0, 0, 0, 0),), (0,))  # no question
    with pytest.raises(ValueError):
        ScoreRequest("r", MODE_TC, "d", 0, ("a",), ((0, 0, 0, 0),), (0,))  # no label_set
    with pytest.raises(ValueError):
        ScoreRequest("r", MODE_QA, "d", 0, ("a",), ((0, 0, 0, 0),), (0,),
                     question="q", label="l", label_set=("x",))


def test_protocol_version_field_present_and_checked():
    line = serialize_message(qa_request())
    assert json.loads(line)["protocol"] == 1
    tampered = json.dumps({**json.loads(line), "protocol": 2})
    with pytest.raises(SchemaError, match="protocol version"):
        parse_message(tampered)


def test_parse_rejects_garbage():
    with pytest.raises(SchemaError):
        parse_message("not json")
    with pytest.raises(SchemaError):
        parse_message('"a string"')
    with pytest.raises(SchemaError):
        parse_message(json.dumps({"protocol": 1, "kind": "nope"}))


def test_parse_rejects_wrong_types():
    payload = json.loads(serialize_message(qa_request()))
    payload["tokens"] = [1, 2, 3]
    with pytest.raises(SchemaError):
        parse_message(json.dumps(payload))
    payload = json.loads(serialize_message(qa_request()))
    payload["boxes"] = [[0, 0, 0]] * len(payload["boxes"])
    with pytest.raises(SchemaError, match="four integers"):
        parse_message(json.dumps(payload))


message_strategy = st.one_of(
    st.builds(
        qa_request,
        doc_id=st.text(min_size=1, max_size=8),
        chunk_start=st.integers(0, 50),
        n=st.integers(0, 6),
        label=st.text(min_size=1, max_size=8),
        request_id=st.text(min_size=1, max_size=8),
    ),
    st.builds(
        tc_request,
        doc_id=st.text(min_size=1, max_size=8),
        chunk_start=st.integers(0, 50),
        n=st.integers(0, 6),
    ),
    st.builds(
        lambda rid, n, ns, s, e: ScoreResponse(
            rid, MODE_QA, qa_logits=QALogits((ns, ns), tuple(s[:n]), tuple(e[:n]))
        ),
        rid=st.text(min_size=1, max_size=8),
        n=st.integers(0, 5),
        ns=st.floats(-50, 50, allow_nan=False),
        s=st.lists(st.floats(-50, 50, allow_nan=False), min_size=5, max_size=5),
        e=st.lists(st.floats(-50, 50, allow_nan=False), min_size=5, max_size=5),
    ),
    st.builds(
        lambda rid, rows: ScoreResponse(rid, MODE_TC, tag_logits=tuple(tuple(r) for r in rows)),
        rid=st.text(min_size=1, max_size=8),
        rows=st.lists(st.lists(st.floats(-50, 50, allow_nan=False), min_size=3, max_size=3), max_size=5),
    ),
    st.builds(ScheduleMessage, request_id=st.text(min_size=1, max_size=8),
              lr=st.floats(1e-9, 1.0, allow_nan=False), stopped=st.booleans()),
    st.builds(ScheduleAck, request_id=st.text(min_size=1, max_size=8),
              lr=st.floats(1e-9, 1.0, allow_nan=False), stopped=st.booleans()),
    st.builds(ErrorMessage, message=st.text(max_size=30),
              request_id=st.one_of(st.none(), st.text(min_size=1, max_size=8))),
)


@settings(max_examples=200, deadline=None)
@given(message_strategy)
def test_message_roundtrip(message):
    line = serialize_message(message)
    assert "\n" not in line
    parsed = parse_message(line)
    assert parsed == message
    assert serialize_message(parsed) == line


# --- gold oracle patterns ----------------------------------------------------------


def test_gold_oracle_marks_answer_span(tiny):
    scorer = gold_oracle(tiny)
    req = qa_request(doc_id="doc-1", n=8, label="date")
    resp = request(scorer, req)
    logits = resp.qa_logits
    # date entity covers tokens [7, 8)
    assert logits.null_slot == (-10.0, -10.0)
    assert logits.start_logits[7] == 5.0
    assert logits.end_logits[7] == 5.0
    assert all(v == -5.0 for i, v in enumerate(logits.start_logits) if i != 7)


def test_gold_oracle_spec_pattern_for_two_token_answer():
    from helpers import make_document
    from docie.model import Dataset

    doc = make_document("d", ["a", "b", "c", "d", "e"], [("company", 2, 2)])
    scorer = gold_oracle(Dataset("x", ("company",), {"train": (doc,)}))
    resp = request(scorer, qa_request(doc_id="d", n=5, label="company"))
    logits = resp.qa_logits
    assert logits.start_logits == (-5.0, -5.0, 5.0, -5.0, -5.0)
    assert logits.end_logits == (-5.0, -5.0, -5.0, 5.0, -5.0)
    assert logits.null_slot == (-10.0, -10.0)


def test_gold_oracle_absent_label_pushes_null(tiny):
    scorer = gold_oracle(tiny)
    resp = request(scorer, qa_request(doc_id="doc-1", n=8, label="address"))
    logits = resp.qa_logits
    assert logits.null_slot == (10.0, 10.0)
    assert all(v == -5.0 for v in logits.start_logits + logits.end_logits)


def test_gold_oracle_entity_outside_chunk_is_absent(tiny):
    scorer = gold_oracle(tiny)
    resp = request(scorer, qa_request(doc_id="doc-1", chunk_start=0, n=4, label="date"))
    assert resp.qa_logits.null_slot == (10.0, 10.0)


def test_gold_oracle_tc_tags(tiny):
    scorer = gold_oracle(tiny)
    resp = request(scorer, tc_request(doc_id="doc-1", n=8))
    from docie.decoding import decode_tc

    entities = decode_tc(resp.tag_logits, ("company", "address", "total", "date"))
    assert [(e.label, e.token_start, e.token_len) for e in entities] == [
        ("company", 0, 2), ("company", 4, 2), ("date", 7, 1),
    ]


def test_gold_oracle_unknown_document(tiny):
    scorer = gold_oracle(tiny)
    with pytest.raises(UnknownDocumentError):
        scorer.score(qa_request(doc_id="ghost"))


def test_constant_scorer_shapes():
    scorer = constant(-1.0)
    qa_resp = request(scorer, qa_request())
    assert set(qa_resp.qa_logits.start_logits) == {-1.0}
    assert qa_resp.qa_logits.null_slot == (-1.0, -1.0)
    tc_resp = request(scorer, tc_request())
    assert len(tc_resp.tag_logits[0]) == 9


def test_length_mismatch_detected(tiny):
    class Broken:
        def score(self, req):
            return ScoreResponse(req.request_id, MODE_QA,
                                 qa_logits=QALogits((0.0, 0.0), (1.0,), (1.0,)))

    with pytest.raises(LengthMismatchError):
        request(Broken(), qa_request(n=8))


def test_request_id_mismatch_detected():
    class Confused:
        def score(self, req):
            return ScoreResponse("other", MODE_QA,
                                 qa_logits=QALogits((0.0, 0.0), (), ()))

    with pytest.raises(SchemaError, match="does not match"):
        request(Confused(), qa_request(n=0))


def test_tc_row_width_mismatch_detected():
    class Narrow:
        def score(self, req):
            return ScoreResponse(req.request_id, MODE_TC,
                                 tag_logits=tuple((0.0,) for _ in req.tokens))

    with pytest.raises(LengthMismatchError, match="row"):
        request(Narrow(), tc_request(n=3))


# --- noisy oracle -------------------------------------------------------------------


def test_noisy_oracle_zero_drop_equals_gold(tiny):
    gold = gold_oracle(tiny)
    noisy = noisy_oracle(tiny, 0.0, seed=1)
    req = qa_request(doc_id="doc-1", n=8, label="company")
    assert noisy.score(req) == gold.score(req)


def test_noisy_oracle_full_drop_hides_everything(tiny):
    noisy = noisy_oracle(tiny, 1.0, seed=1)
    resp = request(noisy, qa_request(doc_id="doc-1", n=8, label="company"))
    assert resp.qa_logits.null_slot == (10.0, 10.0)


def test_noisy_oracle_decision_is_chunk_independent(tiny):
    noisy = noisy_oracle(tiny, 0.5, seed=3)
    a = noisy.score(qa_request(doc_id="doc-1", chunk_start=0, n=8, label="date"))
    b = noisy.score(qa_request(doc_id="doc-1", chunk_start=4, n=4, label="date"))
    # same entity, same fate: either marked in both windows or hidden in both
    hit_a = 5.0 in a.qa_logits.start_logits
    hit_b = 5.0 in b.qa_logits.start_logits
    assert hit_a == hit_b


def test_noisy_oracle_recall_tracks_drop_probability():
    dataset = receipt_dataset(50, with_train=False)  # 200 entities
    cfg = PipelineConfig(mode=MODE_QA, chunk_spec=ChunkSpec(64, 16))
    recalls = []
    for seed in range(5):
        scorer = noisy_oracle(dataset, 0.3, seed=seed)
        report = evaluate_split(dataset.splits["test"], dataset.label_set, scorer, cfg, TEXT)
        recalls.append(report.weighted_recall)
    mean = sum(recalls) / len(recalls)
    assert abs(mean - 0.7) <= 0.07


def test_noisy_oracle_drop_validation(tiny):
    with pytest.raises(ValueError):
        noisy_oracle(tiny, 1.5, seed=0)


# --- pipeline with oracles -----------------------------------------------------------


@pytest.mark.parametrize("mode,match", [(MODE_QA, "text"), (MODE_TC, "span")])
def test_gold_oracle_pipeline_is_perfect(mode, match, tiny):
    cfg = PipelineConfig(mode=mode, chunk_spec=ChunkSpec(64, 16))
    report = evaluate_split(tiny.splits["train"], tiny.label_set, gold_oracle(tiny), cfg, match)
    assert report.weighted_avg == (1.0, 1.0, 1.0)


def test_gold_oracle_survives_chunking(tiny):
    # window forces several chunks; entities are shorter than overlap + 1
    cfg = PipelineConfig(mode=MODE_QA, chunk_spec=ChunkSpec(4, 2))
    report = evaluate_split(tiny.splits["train"], tiny.label_set, gold_oracle(tiny), cfg, "text")
    assert report.weighted_f1 == 1.0


def test_constant_scorer_pipeline_abstains(tiny):
    cfg = PipelineConfig(mode=MODE_QA, chunk_spec=ChunkSpec(64, 16))
    report = evaluate_split(tiny.splits["train"], tiny.label_set, constant(-1.0), cfg, "text")
    assert report.weighted_avg == (0.0, 0.0, 0.0)


# --- transports -----------------------------------------------------------------------


def oracle_command(dataset_dir) -> list[str]:
    return [sys.executable, "-m", "docie.oracle_server", "--scorer", "gold", "--dataset", str(dataset_dir)]


def test_stdio_transport_roundtrip(tmp_path, tiny):
    save(tiny, tmp_path / "ds")
    with StdioScorerClient(oracle_command(tmp_path / "ds")) as client:
        resp = request(client, qa_request(doc_id="doc-1", n=8, label="date"))
        assert resp.qa_logits.start_logits[7] == 5.0
        ack = client.schedule(ScheduleMessage("sched-1", 1e-5, False))
        assert ack == ScheduleAck("sched-1", 1e-5, False)
        with pytest.raises(RemoteError, match="unknown document"):
            client.score(qa_request(doc_id="ghost"))


def test_stdio_transport_spawn_failure():
    with pytest.raises(TransportError):
        StdioScorerClient(["/nonexistent/binary"])


def test_stdio_transport_dead_process(tmp_path, tiny):
    save(tiny, tmp_path / "ds")
    client = StdioScorerClient(oracle_command(tmp_path / "ds"))
    client._proc.kill()
    client._proc.wait()
    with pytest.raises(TransportError):
        client.score(qa_request(doc_id="doc-1"))
    client.close()


def test_http_transport_roundtrip(tiny):
    server = make_http_server(gold_oracle(tiny))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        url = f"http://{server.server_address[0]}:{server.server_address[1]}/"
        client = HttpScorerClient(url)
        resp = request(client, qa_request(doc_id="doc-1", n=8, label="date"))
        assert resp.qa_logits.start_logits[7] == 5.0
        ack = client.schedule(ScheduleMessage("s", 2e-5, True))
        assert ack.stopped is True
        with pytest.raises((RemoteError, TransportError)):
            client.score(qa_request(doc_id="ghost"))
    finally:
        server.shutdown()


def test_http_transport_unreachable():
    client = HttpScorerClient("http://127.0.0.1:1/")
    with pytest.raises(TransportError):
        client.score(qa_request())


def test_handle_line_error_paths(tiny):
    ok, reply = handle_line(gold_oracle(tiny), "garbage")
    assert not ok
    parsed = parse_message(reply)
    assert isinstance(parsed, ErrorMessage)
    ok, reply = handle_line(gold_oracle(tiny), serialize_message(
        ScoreResponse("r", MODE_QA, qa_logits=QALogits((0.0, 0.0), (), ()))))
    assert not ok  # servers do not accept responses


def test_build_scorer_specs(tiny):
    assert build_scorer("constant:-2.5").score(qa_request(n=1)).qa_logits.null_slot == (-2.5, -2.5)
    assert isinstance(build_scorer("gold", tiny), type(gold_oracle(tiny)))
    assert isinstance(build_scorer("noisy:0.3:7", tiny), type(noisy_oracle(tiny, 0.3, 7)))
    with pytest.raises(ValueError):
        build_scorer("gold")  # dataset required
    with pytest.raises(ValueError):
        build_scorer("quantum")
