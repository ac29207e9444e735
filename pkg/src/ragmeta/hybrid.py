"""Hybrid retrieval: weighted fusion of dense and sparse rankings.

Both retrievers contribute a candidate-pool-sized ranking; scores are min-max
normalized over the union of candidates and combined as

    fused = lambda * dense_norm + (1 - lambda) * sparse_norm

A chunk returned by only one retriever takes the other retriever's observed
minimum before normalization, so missing evidence counts as the weakest seen
rather than as zero on an arbitrary scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ragmeta.corpus import MetadataFilter, ScoredChunk
from ragmeta.dense import VectorIndex
from ragmeta.lexical import LexicalIndex


@dataclass(frozen=True)
class HybridParams:
    lambda_: float = 0.5
    candidate_pool: int = 25

    def __post_init__(self) -> None:
        if not 0.0 <= self.lambda_ <= 1.0:
            raise ValueError("lambda must be in [0, 1]")
        if self.candidate_pool < 1:
            raise ValueError("candidate_pool must be >= 1")


def minmax_normalize(scores: Mapping[str, float]) -> dict[str, float]:
    """Scale scores into [0, 1]; a constant list maps to 0.5 everywhere."""
    if not scores:
        return {}
    values = list(scores.values())
    lo, hi = min(values), max(values)
    if hi == lo:
        return {cid: 0.5 for cid in scores}
    span = hi - lo
    return {cid: (s - lo) / span for cid, s in scores.items()}


def combine_scores(lambda_: float, dense_norm: float, sparse_norm: float) -> float:
    return lambda_ * dense_norm + (1.0 - lambda_) * sparse_norm


def search_hybrid(
    query: str,
    query_vector: np.ndarray,
    dense_index: VectorIndex,
    lexical_index: LexicalIndex,
    k: int,
    params: HybridParams | None = None,
    filter_: MetadataFilter | None = None,
) -> list[ScoredChunk]:
    """Fuse dense and sparse candidate pools into a single top-k ranking.

    Raw per-retriever scores are preserved on the result (``None`` when that
    retriever did not return the chunk); ties in the fused score break by
    chunk id.
    """
    params = params or HybridParams()
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > params.candidate_pool:
        raise ValueError(f"k={k} exceeds candidate_pool={params.candidate_pool}")

    dense_hits = dense_index.search(query_vector, params.candidate_pool, filter_)
    sparse_hits = lexical_index.search(query, params.candidate_pool, filter_)
    dense_raw = {h.chunk_id: h.dense_score for h in dense_hits if h.dense_score is not None}
    sparse_raw = {h.chunk_id: h.sparse_score for h in sparse_hits if h.sparse_score is not None}

    union = sorted(set(dense_raw) | set(sparse_raw))
    if not union:
        return []

    dense_fill = min(dense_raw.values()) if dense_raw else 0.0
    sparse_fill = min(sparse_raw.values()) if sparse_raw else 0.0
    dense_norm = minmax_normalize({cid: dense_raw.get(cid, dense_fill) for cid in union})
    sparse_norm = minmax_normalize({cid: sparse_raw.get(cid, sparse_fill) for cid in union})

    fused = {
        cid: combine_scores(params.lambda_, dense_norm[cid], sparse_norm[cid]) for cid in union
    }
    ranked = sorted(fused.items(), key=lambda t: (-t[1], t[0]))
    return [
        ScoredChunk(
            chunk_id=cid,
            rank=i + 1,
            dense_score=dense_raw.get(cid),
            sparse_score=sparse_raw.get(cid),
            fused_score=score,
        )
        for i, (cid, score) in enumerate(ranked[:k])
    ]
