"""Sparse scoring: analyzer, BM25, TF-IDF, and ranked search."""

from __future__ import annotations

import math
import random
import re

import pytest

from ragmeta.corpus import Chunk, MetadataFilter
from ragmeta.lexical import ANALYZER_ID, Bm25Params, LexicalIndex, analyze

from bm25_hand_oracle import hand_bm25, hand_tfidf


def _chunk(doc_id: str, text: str) -> Chunk:
    return Chunk(chunk_id=f"{doc_id}#0", doc_id=doc_id, ordinal=0, text=text)


def _tokens(text: str) -> list[str]:
    return re.findall(r"[^\W_]+", text.lower())


def _brute_bm25(
    texts: dict[str, str], query: str, chunk_id: str, k1: float = 1.5, b: float = 0.75
) -> float:
    """Direct evaluation of the scoring formula, sharing no code with the index."""
    n_chunks = len(texts)
    lengths = {cid: len(_tokens(t)) for cid, t in texts.items()}
    avgdl = sum(lengths.values()) / n_chunks
    score = 0.0
    for term in _tokens(query):
        freq = _tokens(texts[chunk_id]).count(term)
        if freq == 0:
            continue
        df = sum(1 for t in texts.values() if term in _tokens(t))
        idf = math.log((n_chunks - df + 0.5) / (df + 0.5) + 1.0)
        norm = 1.0 - b + b * (lengths[chunk_id] / avgdl)
        score += idf * (freq * (k1 + 1.0)) / (freq + k1 * norm)
    return score


@pytest.fixture()
def two_doc_index() -> LexicalIndex:
    return LexicalIndex([_chunk("d1", "cash flow cash"), _chunk("d2", "revenue growth")])


def test_analyzer_lowercases_and_splits_on_non_alphanumeric():
    assert analyze("Cash cash FLOW") == ["cash", "cash", "flow"]
    assert analyze("cash-flow_x9, (net)") == ["cash", "flow", "x9", "net"]
    assert analyze("") == []
    assert ANALYZER_ID == "lowercase-alnum-v1"


def test_single_chunk_counting():
    index = LexicalIndex([_chunk("d1", "Cash cash FLOW")])
    assert len(index) == 1
    assert index.doc_length("d1#0") == 3
    assert index.term_frequency("cash", "d1#0") == 2
    assert index.term_frequency("flow", "d1#0") == 1
    assert index.doc_frequency("cash") == 1
    assert index.doc_frequency("absent") == 0


def test_identical_chunks_have_symmetric_doc_frequency():
    index = LexicalIndex([_chunk("d1", "cash flow"), _chunk("d2", "cash flow")])
    for term in ("cash", "flow"):
        assert index.doc_frequency(term) == 2


def test_avgdl_is_exact_mean(two_doc_index: LexicalIndex):
    assert two_doc_index.avgdl == 2.5
    total = two_doc_index.doc_length("d1#0") + two_doc_index.doc_length("d2#0")
    assert two_doc_index.avgdl == total / len(two_doc_index)


def test_bm25_matches_hand_evaluation(two_doc_index: LexicalIndex):
    got = two_doc_index.bm25_score("cash", "d1#0")
    assert got == pytest.approx(hand_bm25(), abs=1e-12)
    assert got == pytest.approx(0.9303989000804636, abs=1e-12)
    assert got == pytest.approx(0.9303, abs=1e-4)


def test_bm25_absent_term_contributes_zero(two_doc_index: LexicalIndex):
    base = two_doc_index.bm25_score("cash", "d1#0")
    assert two_doc_index.bm25_score("cash unicorn", "d1#0") == base
    assert two_doc_index.bm25_score("unicorn", "d1#0") == 0.0


def test_bm25_repeated_query_terms_count_per_occurrence(two_doc_index: LexicalIndex):
    once = two_doc_index.bm25_score("cash", "d1#0")
    assert two_doc_index.bm25_score("cash cash", "d1#0") == pytest.approx(2 * once)


def test_bm25_b_zero_disables_length_normalization():
    # Same term frequency, very different lengths: with b=0 the scores tie.
    index = LexicalIndex(
        [_chunk("d1", "cash flow"), _chunk("d2", "cash margin outlook guidance risk")],
        params=Bm25Params(k1=1.5, b=0.0),
    )
    assert index.bm25_score("cash", "d1#0") == pytest.approx(
        index.bm25_score("cash", "d2#0"), abs=1e-12
    )


def test_tfidf_matches_hand_evaluation():
    index = LexicalIndex([_chunk("d1", "a a b")])
    got = index.tfidf_score("a", "d1#0")
    assert got == pytest.approx(hand_tfidf(), abs=1e-12)
    assert got == pytest.approx((2 / 3) * math.log(0.5), abs=1e-12)
    assert got == pytest.approx(-0.46209812037329684, abs=1e-12)


def test_tfidf_empty_query_is_zero(two_doc_index: LexicalIndex):
    assert two_doc_index.tfidf_score("", "d1#0") == 0.0


def test_tfidf_sign_follows_document_frequency():
    index = LexicalIndex(
        [
            _chunk("d1", "rare shared common"),
            _chunk("d2", "shared common filler"),
            _chunk("d3", "common filler words"),
        ]
    )
    # N=3: df=1 gives ln(3/2) > 0, df=2 gives ln(3/3) = 0, df=3 gives ln(3/4) < 0.
    assert index.tfidf_score("rare", "d1#0") > 0
    assert index.tfidf_score("shared", "d1#0") == pytest.approx(0.0, abs=1e-12)
    assert index.tfidf_score("common", "d1#0") < 0


def test_scorers_agree_on_the_zero_case(two_doc_index: LexicalIndex):
    for query, cid in [("revenue", "d1#0"), ("cash", "d2#0"), ("unseen", "d1#0")]:
        bm25 = two_doc_index.bm25_score(query, cid)
        tfidf = two_doc_index.tfidf_score(query, cid)
        assert (bm25 == 0.0) == (tfidf == 0.0)
        assert bm25 == 0.0


def test_empty_corpus_is_rejected():
    with pytest.raises(ValueError, match="empty corpus"):
        LexicalIndex([])


def test_duplicate_chunk_ids_are_rejected():
    with pytest.raises(ValueError, match="duplicate"):
        LexicalIndex([_chunk("d1", "cash"), _chunk("d1", "flow")])


def test_unknown_chunk_id_raises_key_error(two_doc_index: LexicalIndex):
    with pytest.raises(KeyError):
        two_doc_index.bm25_score("cash", "missing#0")
    with pytest.raises(KeyError):
        two_doc_index.term_frequency("cash", "missing#0")


def test_search_includes_zero_score_chunks(two_doc_index: LexicalIndex):
    hits = two_doc_index.search("cash", k=2)
    assert [h.chunk_id for h in hits] == ["d1#0", "d2#0"]
    assert hits[0].sparse_score > 0
    assert hits[1].sparse_score == 0.0
    assert [h.rank for h in hits] == [1, 2]


def test_search_ties_break_by_ascending_chunk_id():
    index = LexicalIndex([_chunk("b", "cash"), _chunk("a", "cash")])
    assert [h.chunk_id for h in index.search("cash", k=2)] == ["a#0", "b#0"]


def test_search_filter_promotes_next_chunk(two_doc_index: LexicalIndex):
    filter_ = MetadataFilter(excluded_chunk_ids=frozenset({"d1#0"}))
    hits = two_doc_index.search("cash", k=2, filter_=filter_)
    assert [h.chunk_id for h in hits] == ["d2#0"]
    assert hits[0].rank == 1


def test_search_k_larger_than_corpus_returns_everything(two_doc_index: LexicalIndex):
    assert len(two_doc_index.search("cash", k=50)) == 2


def test_search_rejects_bad_arguments(two_doc_index: LexicalIndex):
    with pytest.raises(ValueError):
        two_doc_index.search("cash", k=0)
    with pytest.raises(ValueError, match="scorer"):
        two_doc_index.search("cash", k=1, scorer="cosine")


def test_search_matches_brute_force_on_random_corpora():
    vocabulary = "cash flow revenue margin growth risk debt fleet store trial".split()
    for seed in range(10):
        rng = random.Random(seed)
        texts = {
            f"d{i:02d}#0": " ".join(rng.choices(vocabulary, k=rng.randint(3, 12)))
            for i in range(30)
        }
        index = LexicalIndex(
            [Chunk(cid, cid.split("#")[0], 0, text) for cid, text in texts.items()]
        )
        query = " ".join(rng.choices(vocabulary, k=3))
        expected = sorted(
            ((_brute_bm25(texts, query, cid), cid) for cid in texts),
            key=lambda t: (-t[0], t[1]),
        )
        got = index.search(query, k=30)
        assert [h.chunk_id for h in got] == [cid for _, cid in expected]
        for hit, (score, _) in zip(got, expected):
            assert hit.sparse_score == pytest.approx(score, abs=1e-12)


def test_adding_a_chunk_never_decreases_df_or_n():
    base = [_chunk("d1", "cash flow"), _chunk("d2", "revenue")]
    grown = base + [_chunk("d3", "cash growth")]
    small = LexicalIndex(base)
    large = LexicalIndex(grown)
    assert len(large) == len(small) + 1
    for term in ("cash", "flow", "revenue", "growth"):
        assert large.doc_frequency(term) >= small.doc_frequency(term)


def test_contextual_collection_indexes_the_contextual_text():
    chunk = Chunk(
        chunk_id="d1#0",
        doc_id="d1",
        ordinal=0,
        text="plain body",
        contextual_text="Clusters: Liquidity\n\nplain body",
    )
    standard = LexicalIndex([chunk], collection="standard")
    contextual = LexicalIndex([chunk], collection="contextual")
    assert standard.doc_frequency("liquidity") == 0
    assert contextual.doc_frequency("liquidity") == 1
    assert contextual.doc_length("d1#0") == standard.doc_length("d1#0") + 2
