from __future__ import annotations

import random

import pytest

from docie.chunking import Chunk, ChunkSpec, chunk, default_overlap, remap
from docie.model import Document, Entity


def make_doc(n: int) -> Document:
    return Document.from_words("d", [f"w{i}" for i in range(n)])


def test_fixed_example_windows():
    chunks = chunk(make_doc(10), ChunkSpec(4, 2))
    assert [(c.start, c.end) for c in chunks] == [(0, 4), (2, 6), (4, 8), (6, 10)]
    assert [c.index for c in chunks] == [0, 1, 2, 3]


def test_short_document_single_chunk():
    chunks = chunk(make_doc(3), ChunkSpec(4, 2))
    assert [(c.start, c.end) for c in chunks] == [(0, 3)]


def test_empty_document_yields_no_chunks():
    assert chunk(make_doc(0), ChunkSpec(4, 2)) == []


def test_spec_validation():
    with pytest.raises(ValueError):
        ChunkSpec(0, 0)
    with pytest.raises(ValueError):
        ChunkSpec(4, 4)
    with pytest.raises(ValueError):
        ChunkSpec(4, -1)


def test_default_overlap_rule():
    assert default_overlap(512) == 128
    assert default_overlap(256) == 128
    assert default_overlap(100) == 50
    assert ChunkSpec.with_default_overlap(512).overlap == 128


def test_random_coverage_and_overlap():
    rng = random.Random(3)
    for _ in range(200):
        n = rng.randint(1, 60)
        window = rng.randint(1, 20)
        overlap = rng.randint(0, window - 1)
        chunks = chunk(make_doc(n), ChunkSpec(window, overlap))
        covered = set()
        for c in chunks:
            assert c.end - c.start <= window
            covered.update(range(c.start, c.end))
        assert covered == set(range(n))
        for a, b in zip(chunks, chunks[1:-1]):
            assert a.end - b.start == overlap
        assert chunks[-1].end == n


def test_entities_shorter_than_overlap_fit_some_chunk():
    rng = random.Random(5)
    for _ in range(300):
        n = rng.randint(1, 60)
        window = rng.randint(2, 20)
        overlap = rng.randint(1, window - 1)
        chunks = chunk(make_doc(n), ChunkSpec(window, overlap))
        start = rng.randint(0, n - 1)
        length = rng.randint(1, max(1, min(overlap, n - start)))
        if length >= overlap + 1:
            continue
        assert any(c.start <= start and start + length <= c.end for c in chunks), (
            n, window, overlap, start, length)


def test_remap_inside_entity():
    from docie.chunking import LocalSpan

    c = Chunk("d", 0, 2, 6)
    ent = Entity("x", 2, 2, "a b")
    assert remap(c, [ent]) == [LocalSpan("x", 0, 2, False)]


def test_remap_drop_partial():
    c = Chunk("d", 0, 2, 6)
    ent = Entity("x", 3, 4, "a b c d")
    assert remap(c, [ent], "drop") == []


def test_remap_clip_partial():
    from docie.chunking import LocalSpan

    c = Chunk("d", 0, 2, 6)
    ent = Entity("x", 3, 4, "a b c d")
    assert remap(c, [ent], "clip") == [LocalSpan("x", 1, 4, True)]
    assert remap(c, [ent], "mark_partial") == [LocalSpan("x", 1, 4, True)]


def test_remap_outside_entity_skipped():
    c = Chunk("d", 0, 2, 6)
    assert remap(c, [Entity("x", 6, 2, "a b")], "clip") == []


def test_remap_unknown_policy():
    with pytest.raises(ValueError):
        remap(Chunk("d", 0, 0, 4), [], "explode")


def test_remap_unremap_is_intersection():
    rng = random.Random(9)
    for _ in range(200):
        n = rng.randint(4, 40)
        doc = make_doc(n)
        window = rng.randint(2, 12)
        overlap = rng.randint(0, window - 1)
        start = rng.randint(0, n - 1)
        length = rng.randint(1, n - start)
        ent = Entity("x", start, length, "")
        for c in chunk(doc, ChunkSpec(window, overlap)):
            for span in remap(c, [ent], "clip"):
                doc_start = span.start + c.start
                doc_end = span.end + c.start
                assert doc_start == max(ent.token_start, c.start)
                assert doc_end == min(ent.token_end, c.end)
