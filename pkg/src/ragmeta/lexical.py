"""Sparse scoring over chunk text: BM25 plus a plain TF-IDF reference.

The analyzer lowercases and splits on any non-alphanumeric character, and the
same analyzer is applied to queries and chunk text. Both scorers use natural
logarithms. BM25 uses the +1-shifted idf variant, which keeps every term's
idf strictly positive; the TF-IDF scorer keeps the unshifted ``ln(N/(n+1))``
form and may therefore go negative for very common terms.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping

from ragmeta.corpus import Chunk, Collection, MetadataFilter, ScoredChunk

ANALYZER_ID = "lowercase-alnum-v1"

_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)


def analyze(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric characters."""
    return _WORD_RE.findall(text.lower())


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.5
    b: float = 0.75

    def __post_init__(self) -> None:
        if self.k1 < 0:
            raise ValueError("k1 must be >= 0")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError("b must be in [0, 1]")


class LexicalIndex:
    """In-memory posting lists over one text field of a chunk collection.

    Postings are cheap to rebuild, so nothing here is serialized; the index
    is reconstructed from stored chunks at load time.
    """

    def __init__(
        self,
        chunks: Iterable[Chunk],
        collection: Collection = "standard",
        params: Bm25Params | None = None,
    ) -> None:
        self.collection: Collection = collection
        self.params = params or Bm25Params()
        self._chunks: dict[str, Chunk] = {}
        self._doc_len: dict[str, int] = {}
        # term -> {chunk_id -> term frequency}
        self._postings: dict[str, dict[str, int]] = {}
        for chunk in chunks:
            if chunk.chunk_id in self._chunks:
                raise ValueError(f"duplicate chunk_id {chunk.chunk_id!r}")
            tokens = analyze(chunk.collection_text(collection))
            self._chunks[chunk.chunk_id] = chunk
            self._doc_len[chunk.chunk_id] = len(tokens)
            for term, freq in Counter(tokens).items():
                self._postings.setdefault(term, {})[chunk.chunk_id] = freq
        if not self._chunks:
            raise ValueError("cannot build a lexical index over an empty corpus")
        self._avgdl = sum(self._doc_len.values()) / len(self._doc_len)

    def __len__(self) -> int:
        return len(self._chunks)

    @property
    def chunks(self) -> Mapping[str, Chunk]:
        return self._chunks

    @property
    def avgdl(self) -> float:
        return self._avgdl

    def doc_frequency(self, term: str) -> int:
        return len(self._postings.get(term, ()))

    def doc_length(self, chunk_id: str) -> int:
        if chunk_id not in self._doc_len:
            raise KeyError(chunk_id)
        return self._doc_len[chunk_id]

    def term_frequency(self, term: str, chunk_id: str) -> int:
        if chunk_id not in self._chunks:
            raise KeyError(chunk_id)
        return self._postings.get(term, {}).get(chunk_id, 0)

    def _idf(self, term: str) -> float:
        n = self.doc_frequency(term)
        big_n = len(self._chunks)
        return math.log((big_n - n + 0.5) / (n + 0.5) + 1.0)

    def bm25_score(self, query: str, chunk_id: str) -> float:
        """Score one chunk; repeated query terms contribute per occurrence."""
        if chunk_id not in self._chunks:
            raise KeyError(chunk_id)
        k1, b = self.params.k1, self.params.b
        dl = self._doc_len[chunk_id]
        norm = 1.0 - b + b * (dl / self._avgdl)
        score = 0.0
        for term in analyze(query):
            freq = self._postings.get(term, {}).get(chunk_id, 0)
            if freq == 0:
                continue
            score += self._idf(term) * (freq * (k1 + 1.0)) / (freq + k1 * norm)
        return score

    def tfidf_score(self, query: str, chunk_id: str) -> float:
        """Reference scorer: relative term frequency times ``ln(N/(n+1))``."""
        if chunk_id not in self._chunks:
            raise KeyError(chunk_id)
        dl = self._doc_len[chunk_id]
        if dl == 0:
            return 0.0
        big_n = len(self._chunks)
        score = 0.0
        for term in analyze(query):
            freq = self._postings.get(term, {}).get(chunk_id, 0)
            if freq == 0:
                continue
            score += (freq / dl) * math.log(big_n / (self.doc_frequency(term) + 1.0))
        return score

    def search(
        self,
        query: str,
        k: int,
        filter_: MetadataFilter | None = None,
        scorer: str = "bm25",
    ) -> list[ScoredChunk]:
        """Top-k chunks by sparse score, ties broken by chunk id.

        Chunks that match the filter but contain no query term still appear
        with score zero, so ``k = len(index)`` yields a total ranking.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        if scorer not in ("bm25", "tfidf"):
            raise ValueError(f"unknown scorer {scorer!r}")
        score = self.bm25_score if scorer == "bm25" else self.tfidf_score
        candidates = [
            cid
            for cid, chunk in self._chunks.items()
            if filter_ is None or filter_.matches(chunk)
        ]
        ranked = sorted(((score(query, cid), cid) for cid in candidates), key=lambda t: (-t[0], t[1]))
        return [
            ScoredChunk(chunk_id=cid, rank=i + 1, sparse_score=s)
            for i, (s, cid) in enumerate(ranked[:k])
        ]
