from __future__ import annotations

import dataclasses

from docie.model import Dataset, Document, Entity, Token, validate

from helpers import make_document, tiny_dataset


def test_from_words_builds_consistent_offsets():
    doc = Document.from_words("d", ["aa", "b", "ccc"])
    assert doc.text == "aa b ccc"
    assert [(t.char_start, t.char_len) for t in doc.tokens] == [(0, 2), (3, 1), (5, 3)]


def test_entity_char_span_covers_exact_text(tiny):
    doc = tiny.splits["train"][0]
    for ent in doc.entities:
        start, length = doc.entity_char_span(ent)
        assert doc.text[start : start + length] == ent.text


def test_validate_well_formed_fixture_is_clean(tiny):
    assert validate(tiny) == []


def test_validate_is_pure(tiny):
    assert validate(tiny) == validate(tiny)


def test_entity_span_out_of_range():
    doc = make_document("d", ["a", "b"], [])
    bad = dataclasses.replace(doc, entities=(Entity("company", 1, 2, "b ?"),))
    dataset = Dataset("x", ("company",), {"train": (bad,)})
    violations = validate(dataset)
    assert len(violations) == 1
    assert "span out of range" in violations[0].rule


def test_overlapping_entities_reported():
    doc = make_document("d", ["a", "b", "c"], [])
    ents = (Entity("company", 0, 2, "a b"), Entity("total", 1, 2, "b c"))
    dataset = Dataset("x", ("company", "total"), {"train": (dataclasses.replace(doc, entities=ents),)})
    violations = validate(dataset)
    assert len(violations) == 1
    assert "overlap" in violations[0].rule


def test_entity_text_mismatch_reported():
    doc = make_document("d", ["a", "b"], [])
    bad = dataclasses.replace(doc, entities=(Entity("company", 0, 2, "WRONG"),))
    dataset = Dataset("x", ("company",), {"train": (bad,)})
    assert any("whitespace-join" in v.rule for v in validate(dataset))


def test_unknown_label_reported():
    doc = make_document("d", ["a"], [("mystery", 0, 1)])
    dataset = Dataset("x", ("company",), {"train": (doc,)})
    assert any("not in label set" in v.rule for v in validate(dataset))


def test_box_out_of_range_reported():
    token = Token("a", 0, (0, 0, 2000, 10), 0, 1)
    doc = Document("d", (token,), "a", ())
    dataset = Dataset("x", (), {"train": (doc,)})
    assert any("box" in v.field for v in validate(dataset))


def test_token_char_overlap_reported():
    tokens = (Token("ab", 0, (0, 0, 1, 1), 0, 2), Token("b", 0, (0, 0, 1, 1), 1, 1))
    doc = Document("d", tokens, "ab", ())
    dataset = Dataset("x", (), {"train": (doc,)})
    assert any("overlaps or precedes" in v.rule for v in validate(dataset))


def test_duplicate_doc_id_reported():
    doc = make_document("same", ["a"], [])
    dataset = Dataset("x", (), {"train": (doc, doc)})
    assert any("duplicate document id" in v.rule for v in validate(dataset))


def test_duplicate_id_allowed_across_splits():
    doc = make_document("same", ["a"], [])
    dataset = Dataset("x", (), {"train": (doc,), "test": (doc,)})
    assert validate(dataset) == []


def test_tiny_dataset_shape():
    dataset = tiny_dataset()
    assert len(dataset.splits["train"]) == 2
    assert sum(len(d.entities) for d in dataset.documents()) == 3
