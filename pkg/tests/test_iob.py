from __future__ import annotations

import random

import pytest
from hypothesis import given, strategies as st

from docie.iob import (
    BEGIN_ON_ORPHAN,
    STRICT,
    IobDecodeError,
    RepairPolicy,
    TagSequence,
    bridge,
    decode,
    encode,
    parse_policy,
    tag_vocabulary,
)

from helpers import LABELS, random_document


def seq(tags: str, labels=("x",)) -> TagSequence:
    """Compact builder: 'B-x I-x O' style strings."""
    return TagSequence(tuple(tags.split()), tuple(labels))


def test_encode_no_entities_is_all_outside():
    doc = random_document(random.Random(0), "d")
    doc = doc.__class__(doc.id, doc.tokens, doc.text, ())
    assert set(encode(doc, LABELS).tags) == {"O"}


def test_encode_marks_begin_and_inside():
    from helpers import make_document

    doc = make_document("d", ["a", "b", "c", "d", "e"], [("total", 2, 2)])
    assert encode(doc, LABELS).tags == ("O", "O", "B-total", "I-total", "O")


def test_encode_rejects_overlap():
    from docie.model import Entity
    from helpers import make_document

    doc = make_document("d", ["a", "b", "c"], [])
    doc = doc.__class__(doc.id, doc.tokens, doc.text, (Entity("total", 0, 2, "a b"), Entity("date", 1, 1, "b")))
    with pytest.raises(ValueError, match="overlap"):
        encode(doc, LABELS)


def test_tag_vocabulary_order():
    assert tag_vocabulary(("a", "b")) == ["O", "B-a", "I-a", "B-b", "I-b"]


def test_literal_interrupted_run_begin_on_orphan():
    s = seq("B-x I-x I-x I-x I-x O I-x I-x I-x I-x I-x")
    entities = decode(s, BEGIN_ON_ORPHAN)
    assert [(e.token_start, e.token_end) for e in entities] == [(0, 5), (6, 11)]


def test_literal_interrupted_run_bridge_one():
    s = seq("B-x I-x I-x I-x I-x O I-x I-x I-x I-x I-x")
    entities = decode(s, bridge(1))
    assert [(e.token_start, e.token_end) for e in entities] == [(0, 11)]


def test_bridge_does_not_merge_across_begin():
    s = seq("B-x I-x O B-x I-x")
    entities = decode(s, bridge(3))
    assert [(e.token_start, e.token_end) for e in entities] == [(0, 2), (3, 5)]


def test_bridge_gap_longer_than_limit_splits():
    s = seq("B-x I-x O O I-x")
    assert len(decode(s, bridge(1))) == 2
    assert len(decode(s, bridge(2))) == 1


def test_bridge_repeated_gaps_absorbed():
    s = seq("B-x O I-x O I-x")
    entities = decode(s, bridge(1))
    assert [(e.token_start, e.token_end) for e in entities] == [(0, 5)]


def test_all_outside_decodes_empty():
    assert decode(seq("O O O")) == []


def test_strict_orphan_start_errors_with_position():
    with pytest.raises(IobDecodeError) as exc:
        decode(seq("I-x O"), STRICT)
    assert exc.value.position == 0


def test_strict_orphan_after_outside_errors():
    with pytest.raises(IobDecodeError) as exc:
        decode(seq("B-x O I-x"), STRICT)
    assert exc.value.position == 2


def test_strict_label_switch_errors():
    s = seq("B-x I-y", labels=("x", "y"))
    with pytest.raises(IobDecodeError):
        decode(s, STRICT)


def test_label_switch_starts_new_entity():
    s = seq("B-x I-y I-y", labels=("x", "y"))
    entities = decode(s, BEGIN_ON_ORPHAN)
    assert [(e.label, e.token_start, e.token_end) for e in entities] == [("x", 0, 1), ("y", 1, 3)]


def test_adjacent_begins_stay_separate():
    s = seq("B-x B-x I-x")
    entities = decode(s, BEGIN_ON_ORPHAN)
    assert [(e.token_start, e.token_end) for e in entities] == [(0, 1), (1, 3)]


def test_decode_recovers_text_from_tokens():
    s = seq("B-x I-x O")
    entities = decode(s, BEGIN_ON_ORPHAN, tokens=["a", "b", "c"])
    assert entities[0].text == "a b"


def test_malformed_tag_rejected():
    with pytest.raises(ValueError, match="malformed"):
        decode(seq("B-x Q"))
    with pytest.raises(ValueError, match="unknown label"):
        decode(seq("B-x I-zz"))


def test_token_length_mismatch_rejected():
    with pytest.raises(ValueError, match="token count"):
        decode(seq("B-x O"), tokens=["only-one"])


def test_parse_policy_forms():
    assert parse_policy("strict") == STRICT
    assert parse_policy("begin_on_orphan") == BEGIN_ON_ORPHAN
    assert parse_policy("bridge:3") == bridge(3)
    assert parse_policy("bridge", 2) == bridge(2)
    with pytest.raises(ValueError):
        parse_policy("whatever")


def test_policy_validation():
    with pytest.raises(ValueError):
        RepairPolicy("bridge", -1)


@pytest.mark.parametrize("policy", [STRICT, BEGIN_ON_ORPHAN, bridge(0), bridge(2)])
def test_roundtrip_random_layouts(policy):
    rng = random.Random(7)
    for i in range(200):
        doc = random_document(rng, f"d{i}")
        decoded = decode(encode(doc, LABELS), policy, doc.word_texts())
        assert decoded == list(doc.entities)


def _random_tags(rng: random.Random, n: int) -> TagSequence:
    vocab = tag_vocabulary(("x", "y"))
    return TagSequence(tuple(rng.choice(vocab) for _ in range(n)), ("x", "y"))


@pytest.mark.parametrize("policy", [BEGIN_ON_ORPHAN, bridge(0), bridge(1), bridge(4)])
def test_decode_never_overlaps(policy):
    rng = random.Random(11)
    for _ in range(300):
        s = _random_tags(rng, rng.randint(0, 20))
        entities = sorted(decode(s, policy), key=lambda e: e.token_start)
        for a, b in zip(entities, entities[1:]):
            assert a.token_end <= b.token_start


@given(st.integers(0, 10**9), st.integers(0, 24))
def test_bridge_zero_equals_begin_on_orphan(seed, n):
    s = _random_tags(random.Random(seed), n)
    assert decode(s, bridge(0)) == decode(s, BEGIN_ON_ORPHAN)
