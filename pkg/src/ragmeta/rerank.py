"""Second-stage ranking over a candidate pool.

Two interchangeable rerankers: an external relevance model called through the
gateway, and a metadata reranker that scores candidates from their enrichment
metadata alone. The metadata composite blends four components, each in
[0, 1]:

``entity_freq``
    How common the candidate's entities are across the whole pool.
``cluster_coherence``
    How much the candidate's parent clusters agree with the pool.
``entity_query``
    The fraction of the candidate's entities mentioned in the query.
``retrieval``
    The incoming retrieval score, min-max normalized over the pool.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from ragmeta.corpus import Chunk, Collection, ScoredChunk, normalize_label
from ragmeta.gateway import LlmGateway
from ragmeta.hybrid import minmax_normalize
from ragmeta.lexical import analyze

COMPONENT_NAMES = ("entity_freq", "cluster_coherence", "entity_query", "retrieval")


@dataclass(frozen=True)
class RerankWeights:
    entity_freq: float = 0.25
    cluster_coherence: float = 0.25
    entity_query: float = 0.25
    retrieval: float = 0.25

    def __post_init__(self) -> None:
        values = (self.entity_freq, self.cluster_coherence, self.entity_query, self.retrieval)
        if any(v < 0 for v in values):
            raise ValueError("rerank weights must be non-negative")
        if abs(sum(values) - 1.0) > 1e-9:
            raise ValueError(f"rerank weights must sum to 1, got {sum(values)}")

    def as_dict(self) -> dict[str, float]:
        return {
            "entity_freq": self.entity_freq,
            "cluster_coherence": self.cluster_coherence,
            "entity_query": self.entity_query,
            "retrieval": self.retrieval,
        }


def _is_sublist(needle: list[str], haystack: list[str]) -> bool:
    if not needle or len(needle) > len(haystack):
        return False
    return any(
        haystack[i : i + len(needle)] == needle for i in range(len(haystack) - len(needle) + 1)
    )


def _pool_frequency_score(labels: tuple[str, ...], counts: Mapping[str, int], pool: int) -> float:
    """Mean pool-frequency of this candidate's labels; no labels scores 0."""
    if not labels:
        return 0.0
    normalized = [normalize_label(lb) for lb in labels]
    return sum(counts.get(lb, 0) / pool for lb in normalized) / len(normalized)


def metadata_rerank(
    query: str,
    candidates: Sequence[ScoredChunk],
    chunks: Mapping[str, Chunk],
    top_n: int,
    weights: RerankWeights | None = None,
) -> list[ScoredChunk]:
    """Rank candidates by the weighted metadata composite.

    Every returned chunk carries its per-component scores in
    ``rerank_components``; ties in the composite break by chunk id.
    """
    weights = weights or RerankWeights()
    if not 1 <= top_n <= len(candidates):
        raise ValueError(f"top_n must be in [1, {len(candidates)}], got {top_n}")
    pool = len(candidates)
    entity_counts: dict[str, int] = {}
    cluster_counts: dict[str, int] = {}
    for sc in candidates:
        meta = chunks[sc.chunk_id].metadata
        for label in {normalize_label(e) for e in meta.chunk_entities}:
            entity_counts[label] = entity_counts.get(label, 0) + 1
        for label in {normalize_label(c) for c in meta.parent_clusters}:
            cluster_counts[label] = cluster_counts.get(label, 0) + 1

    query_tokens = analyze(query)
    retrieval_norm = minmax_normalize({sc.chunk_id: sc.best_score() for sc in candidates})

    rescored: list[tuple[float, ScoredChunk, dict[str, float]]] = []
    for sc in candidates:
        meta = chunks[sc.chunk_id].metadata
        entity_freq = _pool_frequency_score(meta.chunk_entities, entity_counts, pool)
        cluster_coherence = _pool_frequency_score(meta.parent_clusters, cluster_counts, pool)
        if meta.chunk_entities:
            matched = sum(
                1
                for entity in meta.chunk_entities
                if _is_sublist(analyze(entity), query_tokens)
            )
            entity_query = matched / len(meta.chunk_entities)
        else:
            entity_query = 0.0
        components = {
            "entity_freq": entity_freq,
            "cluster_coherence": cluster_coherence,
            "entity_query": entity_query,
            "retrieval": retrieval_norm[sc.chunk_id],
        }
        composite = (
            weights.entity_freq * entity_freq
            + weights.cluster_coherence * cluster_coherence
            + weights.entity_query * entity_query
            + weights.retrieval * components["retrieval"]
        )
        rescored.append((composite, sc, components))

    rescored.sort(key=lambda t: (-t[0], t[1].chunk_id))
    return [
        ScoredChunk(
            chunk_id=sc.chunk_id,
            rank=i + 1,
            dense_score=sc.dense_score,
            sparse_score=sc.sparse_score,
            fused_score=sc.fused_score,
            rerank_score=composite,
            rerank_components=components,
        )
        for i, (composite, sc, components) in enumerate(rescored[:top_n])
    ]


def external_rerank(
    gateway: LlmGateway,
    query: str,
    candidates: Sequence[ScoredChunk],
    chunks: Mapping[str, Chunk],
    top_n: int,
    collection: Collection = "standard",
) -> list[ScoredChunk]:
    """Rank candidates with the provider's relevance model.

    The text sent per candidate matches the active collection, so the
    contextual variant is judged when the contextual collection is searched.
    """
    if not 1 <= top_n <= len(candidates):
        raise ValueError(f"top_n must be in [1, {len(candidates)}], got {top_n}")
    texts = [chunks[sc.chunk_id].collection_text(collection) for sc in candidates]
    ranked = gateway.rerank(query, texts, top_n)
    out: list[ScoredChunk] = []
    for rank, (index, score) in enumerate(ranked, start=1):
        sc = candidates[index]
        out.append(
            ScoredChunk(
                chunk_id=sc.chunk_id,
                rank=rank,
                dense_score=sc.dense_score,
                sparse_score=sc.sparse_score,
                fused_score=sc.fused_score,
                rerank_score=score,
            )
        )
    return out
