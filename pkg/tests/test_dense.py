"""Dense store: cosine arithmetic, record validation, exhaustive top-k."""

from __future__ import annotations

import math
import random

import numpy as np
import pytest

from ragmeta.corpus import Chunk, MetadataFilter
from ragmeta.dense import VectorIndex, VectorRecord, cosine_similarity


def _random_vectors(rng: random.Random, count: int, dim: int) -> dict[str, np.ndarray]:
    return {
        f"d{i:03d}#0": np.array([rng.gauss(0, 1) for _ in range(dim)])
        for i in range(count)
    }


def _build(vectors: dict[str, np.ndarray]) -> VectorIndex:
    index = VectorIndex()
    for cid, vec in vectors.items():
        index.add(VectorRecord(cid, vec))
    return index


def _oracle_ranking(
    vectors: dict[str, np.ndarray], query: np.ndarray
) -> list[tuple[str, float]]:
    """Full sort by cosine, computed per pair on the stored float32 values."""
    scored = []
    for cid, vec in vectors.items():
        stored = np.asarray(vec, dtype=np.float32).astype(np.float64)
        q = np.asarray(query, dtype=np.float64)
        sim = float(np.dot(stored, q) / (np.linalg.norm(stored) * np.linalg.norm(q)))
        scored.append((cid, min(1.0, max(-1.0, sim))))
    return sorted(scored, key=lambda t: (-t[1], t[0]))


def test_cosine_identity_orthogonality_and_45_degrees():
    v = np.array([0.3, -1.2, 4.0])
    assert cosine_similarity(v, v) == pytest.approx(1.0, abs=1e-12)
    assert cosine_similarity(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0
    got = cosine_similarity(np.array([1.0, 1.0]), np.array([1.0, 0.0]))
    assert got == pytest.approx(math.sqrt(2) / 2, abs=1e-12)
    assert got == pytest.approx(0.7071067811865476, abs=1e-12)


def test_cosine_is_symmetric_and_scale_invariant():
    rng = random.Random(7)
    for _ in range(25):
        u = np.array([rng.gauss(0, 1) for _ in range(8)])
        v = np.array([rng.gauss(0, 1) for _ in range(8)])
        alpha = rng.uniform(0.1, 50.0)
        assert cosine_similarity(u, v) == pytest.approx(
            cosine_similarity(v, u), abs=1e-12
        )
        assert cosine_similarity(alpha * u, v) == pytest.approx(
            cosine_similarity(u, v), abs=1e-12
        )


def test_cosine_rejects_degenerate_and_mismatched_input():
    with pytest.raises(ValueError, match="degenerate vector"):
        cosine_similarity(np.zeros(3), np.ones(3))
    with pytest.raises(ValueError, match="shape"):
        cosine_similarity(np.ones(3), np.ones(4))


def test_vector_record_caches_the_norm():
    vec = np.array([3.0, 4.0])
    record = VectorRecord("d1#0", vec)
    assert record.vector.dtype == np.float32
    true_norm = float(np.linalg.norm(record.vector.astype(np.float64)))
    assert abs(record.norm - true_norm) <= 1e-9 * true_norm
    assert record.norm == pytest.approx(5.0)


def test_vector_record_rejects_zero_and_empty_vectors():
    with pytest.raises(ValueError):
        VectorRecord("d1#0", np.zeros(4))
    with pytest.raises(ValueError):
        VectorRecord("d1#0", np.array([]))


def test_first_insert_fixes_the_dimension():
    index = VectorIndex()
    index.add(VectorRecord("d1#0", np.ones(4)))
    assert index.dim == 4
    with pytest.raises(ValueError, match="dim"):
        index.add(VectorRecord("d2#0", np.ones(3)))
    with pytest.raises(ValueError, match="duplicate"):
        index.add(VectorRecord("d1#0", np.ones(4)))


def test_singleton_search():
    index = _build({"d1#0": np.array([1.0, 2.0])})
    hits = index.search(np.array([1.0, 2.0]), k=5)
    assert [(h.chunk_id, h.rank) for h in hits] == [("d1#0", 1)]
    assert hits[0].dense_score == pytest.approx(1.0, abs=1e-12)


def test_empty_index_returns_no_hits():
    assert VectorIndex().search(np.ones(4), k=3) == []


def test_search_argument_validation():
    index = _build({"d1#0": np.ones(2)})
    with pytest.raises(ValueError):
        index.search(np.ones(2), k=0)
    with pytest.raises(ValueError, match="dim"):
        index.search(np.ones(3), k=1)
    with pytest.raises(ValueError, match="degenerate vector"):
        index.search(np.zeros(2), k=1)


def test_equal_vectors_tie_break_by_chunk_id():
    same = np.array([1.0, 1.0])
    index = _build({"b#0": same, "a#0": same, "c#0": same})
    assert [h.chunk_id for h in index.search(same, k=3)] == ["a#0", "b#0", "c#0"]


def test_search_matches_the_full_sort_oracle():
    rng = random.Random(11)
    vectors = _random_vectors(rng, 60, 8)
    index = _build(vectors)
    for _ in range(5):
        query = np.array([rng.gauss(0, 1) for _ in range(8)])
        oracle = _oracle_ranking(vectors, query)
        for k in (1, 7, 25):
            hits = index.search(query, k=k)
            assert [h.chunk_id for h in hits] == [cid for cid, _ in oracle[:k]]
            for hit, (_, sim) in zip(hits, oracle):
                assert hit.dense_score == pytest.approx(sim, abs=1e-12)


def test_topk_is_a_prefix_of_the_full_ranking():
    rng = random.Random(3)
    vectors = _random_vectors(rng, 40, 6)
    index = _build(vectors)
    query = np.array([rng.gauss(0, 1) for _ in range(6)])
    full = [h.chunk_id for h in index.search(query, k=40)]
    for k in (1, 5, 17):
        assert [h.chunk_id for h in index.search(query, k=k)] == full[:k]


def _chunk_lookup(vectors: dict[str, np.ndarray]) -> dict[str, Chunk]:
    return {
        cid: Chunk(cid, cid.split("#")[0], 0, f"text for {cid}") for cid in vectors
    }


def test_filtered_search_equals_search_over_the_subset():
    rng = random.Random(5)
    vectors = _random_vectors(rng, 30, 6)
    allowed_docs = frozenset(cid.split("#")[0] for cid in list(vectors)[:10])
    filtered_index = VectorIndex(_chunk_lookup(vectors))
    subset_index = VectorIndex()
    for cid, vec in vectors.items():
        filtered_index.add(VectorRecord(cid, vec))
        if cid.split("#")[0] in allowed_docs:
            subset_index.add(VectorRecord(cid, vec))
    query = np.array([rng.gauss(0, 1) for _ in range(6)])
    filter_ = MetadataFilter(allowed_doc_ids=allowed_docs)
    got = filtered_index.search(query, k=10, filter_=filter_)
    want = subset_index.search(query, k=10)
    assert [h.chunk_id for h in got] == [h.chunk_id for h in want]


def test_filter_excluding_everything_yields_empty():
    vectors = {"d1#0": np.ones(3), "d2#0": np.array([1.0, 0.0, 0.0])}
    index = VectorIndex(_chunk_lookup(vectors))
    for cid, vec in vectors.items():
        index.add(VectorRecord(cid, vec))
    filter_ = MetadataFilter(allowed_doc_ids=frozenset({"nowhere"}))
    assert index.search(np.ones(3), k=2, filter_=filter_) == []


def test_filtering_without_chunk_lookup_is_an_error():
    index = _build({"d1#0": np.ones(3)})
    with pytest.raises(KeyError, match="cannot filter"):
        index.search(np.ones(3), k=1, filter_=MetadataFilter(allowed_doc_ids=frozenset({"d1"})))
