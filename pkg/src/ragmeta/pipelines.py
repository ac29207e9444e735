"""The six retrieval architectures, from dense-only to the full pipeline.

    1. dense search over one collection
    2. hybrid dense + sparse fusion
    3. hybrid to a candidate pool, then a reranker
    4. LLM file filtering and query rewriting in front of architecture 3
    5. hybrid to a candidate pool, then the metadata reranker
    6. architecture 4 down to a small initial set, then chunk expansion

Pre-retrieval LLM steps fail open: a broken helper falls back to the
unfiltered corpus or the original query and leaves a warning in the trace.
Generation fails closed: a generator transport failure surfaces to the
caller.
"""

from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping, Sequence

from ragmeta import prompts
from ragmeta.corpus import (
    Chunk,
    Collection,
    DocumentMetadata,
    MetadataFilter,
    ScoredChunk,
    normalize_label,
)
from ragmeta.gateway import FieldSpec, GatewayError, LlmGateway
from ragmeta.hybrid import HybridParams, search_hybrid
from ragmeta.rerank import RerankWeights, external_rerank, metadata_rerank
from ragmeta.storage import RagIndex

VALID_RERANKERS = ("none", "external", "metadata")

_FILTER_SCHEMA = {"selected_files": FieldSpec("string_list")}


@dataclass(frozen=True)
class ExpansionParams:
    initial_k: int = 4
    expand_k: int = 3

    def __post_init__(self) -> None:
        if self.initial_k < 1:
            raise ValueError("initial_k must be >= 1")
        if self.expand_k < 0:
            raise ValueError("expand_k must be >= 0")


def _default_reranker(architecture: int) -> str:
    if architecture in (1, 2):
        return "none"
    if architecture == 5:
        return "metadata"
    return "external"


@dataclass
class PipelineConfig:
    """Everything that defines one retrieval configuration.

    ``reranker=None`` resolves to the architecture's default (none for 1-2,
    metadata for 5, external otherwise). Architectures 1-2 reject any
    reranker; architecture 5 requires the metadata one; architectures 3, 4,
    and 6 accept external, metadata, or none (none degenerates to truncating
    the candidate pool, which is useful for pipeline-equivalence checks).
    """

    architecture: int
    collection: Collection = "standard"
    k: int = 7
    candidate_pool: int = 25
    hybrid: HybridParams = field(default_factory=HybridParams)
    reranker: str | None = None
    expansion: ExpansionParams = field(default_factory=ExpansionParams)
    rerank_weights: RerankWeights = field(default_factory=RerankWeights)

    def __post_init__(self) -> None:
        if self.architecture not in (1, 2, 3, 4, 5, 6):
            raise ValueError(f"architecture must be 1..6, got {self.architecture}")
        if self.collection not in ("standard", "contextual"):
            raise ValueError(f"unknown collection {self.collection!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.k > self.candidate_pool:
            raise ValueError(f"k={self.k} must not exceed candidate_pool={self.candidate_pool}")
        if self.reranker is None:
            self.reranker = _default_reranker(self.architecture)
        if self.reranker not in VALID_RERANKERS:
            raise ValueError(f"unknown reranker {self.reranker!r}")
        if self.architecture in (1, 2) and self.reranker != "none":
            raise ValueError(f"architecture {self.architecture} does not take a reranker")
        if self.architecture == 5 and self.reranker != "metadata":
            raise ValueError("architecture 5 is defined by the metadata reranker")
        # candidate_pool is authoritative; keep the hybrid params in step.
        self.hybrid = replace(self.hybrid, candidate_pool=self.candidate_pool)


@dataclass
class AnswerTrace:
    """Full record of one answer() run, JSON-serializable for --trace."""

    original_query: str
    answer_text: str
    retrieved: list[ScoredChunk]
    rewritten_query: str | None = None
    selected_files: list[str] | None = None
    expansion_added: list[str] = field(default_factory=list)
    reranker_input_size: int | None = None
    stage_latencies_s: dict[str, float] = field(default_factory=dict)
    total_latency_s: float = 0.0
    llm_latency_s: float = 0.0
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "original_query": self.original_query,
            "rewritten_query": self.rewritten_query,
            "selected_files": self.selected_files,
            "retrieved": [
                {
                    "chunk_id": sc.chunk_id,
                    "rank": sc.rank,
                    "dense_score": sc.dense_score,
                    "sparse_score": sc.sparse_score,
                    "fused_score": sc.fused_score,
                    "rerank_score": sc.rerank_score,
                    "rerank_components": sc.rerank_components,
                }
                for sc in self.retrieved
            ],
            "expansion_added": self.expansion_added,
            "reranker_input_size": self.reranker_input_size,
            "answer_text": self.answer_text,
            "stage_latencies_s": self.stage_latencies_s,
            "total_latency_s": self.total_latency_s,
            "llm_latency_s": self.llm_latency_s,
            "warnings": self.warnings,
        }


def filter_files(
    gateway: LlmGateway, query: str, doc_index: Mapping[str, DocumentMetadata]
) -> list[str]:
    """Ask the helper LLM which documents could hold the answer.

    Unknown names in the reply are dropped; an empty or failed selection
    falls open to every document.
    """
    selected, _, _ = _filter_files_checked(gateway, query, doc_index)
    return selected


def _filter_files_checked(
    gateway: LlmGateway, query: str, doc_index: Mapping[str, DocumentMetadata]
) -> tuple[list[str], bool, list[str]]:
    """Returns (doc_ids, fail_open, warnings)."""
    if not doc_index:
        raise ValueError("doc_index must be non-empty")
    known = sorted(doc_index)
    lines = [f"{doc_id} :: {doc_index[doc_id].one_liner}" for doc_id in known]
    warnings: list[str] = []
    try:
        payload = gateway.chat_structured(
            "pipeline_helper",
            prompts.SYSTEM_PIPELINE_HELPER,
            prompts.file_filter_prompt(query, lines),
            _FILTER_SCHEMA,
        )
        raw = payload["selected_files"]
    except GatewayError as exc:
        warnings.append(f"file filtering failed ({exc}); searching all documents")
        return known, True, warnings
    known_set = set(known)
    selected: list[str] = []
    for name in raw:
        if name in known_set and name not in selected:
            selected.append(name)
    if not selected:
        warnings.append("file filtering selected nothing usable; searching all documents")
        return known, True, warnings
    return selected, False, warnings


def rewrite_query(
    gateway: LlmGateway, query: str, selected: Sequence[DocumentMetadata]
) -> str:
    """Reformulate the query using the selected documents' metadata.

    Any failure, or an empty rewrite, falls open to the original query.
    """
    rewritten, _ = _rewrite_query_checked(gateway, query, selected)
    return rewritten


def _rewrite_query_checked(
    gateway: LlmGateway, query: str, selected: Sequence[DocumentMetadata]
) -> tuple[str, list[str]]:
    if not selected:
        raise ValueError("selected must be non-empty")
    notes_parts = []
    for meta in selected:
        notes_parts.append(
            f"{meta.one_liner}\nSummary: {meta.summary}\nClusters: {'; '.join(meta.clusters)}"
        )
    warnings: list[str] = []
    try:
        reply = gateway.chat(
            "pipeline_helper",
            prompts.SYSTEM_PIPELINE_HELPER,
            prompts.query_rewrite_prompt(query, "\n\n".join(notes_parts)),
        )
    except GatewayError as exc:
        warnings.append(f"query rewriting failed ({exc}); keeping the original query")
        return query, warnings
    rewritten = " ".join(reply.split())
    if not rewritten:
        warnings.append("query rewriting returned an empty string; keeping the original query")
        return query, warnings
    return rewritten, warnings


def expand_chunks(
    initial: Sequence[Chunk],
    chunks: Mapping[str, Chunk],
    expand_k: int,
    allowed_doc_ids: frozenset[str] | None = None,
) -> list[Chunk]:
    """Metadata-only second-stage retrieval around a high-certainty set.

    The cluster labels and entities that occur most often across the initial
    chunks are "core"; other chunks sharing any core concept are ranked by
    how many they share (ties by chunk id) and the first ``expand_k`` win.
    """
    if not initial:
        raise ValueError("initial must be non-empty")
    if expand_k < 1:
        return []
    cluster_counts: dict[str, int] = {}
    entity_counts: dict[str, int] = {}
    for chunk in initial:
        for label in {normalize_label(c) for c in chunk.metadata.parent_clusters}:
            cluster_counts[label] = cluster_counts.get(label, 0) + 1
        for label in {normalize_label(e) for e in chunk.metadata.chunk_entities}:
            entity_counts[label] = entity_counts.get(label, 0) + 1
    core_clusters = _argmax_labels(cluster_counts)
    core_entities = _argmax_labels(entity_counts)
    if not core_clusters and not core_entities:
        return []
    initial_ids = {c.chunk_id for c in initial}
    scored: list[tuple[int, str]] = []
    for chunk_id, chunk in chunks.items():
        if chunk_id in initial_ids:
            continue
        if allowed_doc_ids is not None and chunk.doc_id not in allowed_doc_ids:
            continue
        clusters = {normalize_label(c) for c in chunk.metadata.parent_clusters}
        entities = {normalize_label(e) for e in chunk.metadata.chunk_entities}
        matches = len(core_clusters & clusters) + len(core_entities & entities)
        if matches > 0:
            scored.append((matches, chunk_id))
    scored.sort(key=lambda t: (-t[0], t[1]))
    return [chunks[chunk_id] for _, chunk_id in scored[:expand_k]]


def _argmax_labels(counts: Mapping[str, int]) -> set[str]:
    if not counts:
        return set()
    best = max(counts.values())
    return {label for label, n in counts.items() if n == best}


def context_blocks(index: RagIndex, chunk_ids: Sequence[str], collection: Collection) -> list[str]:
    """The labeled context blocks handed to the generator, in rank order."""
    return [f"[{cid}]\n{index.chunks[cid].collection_text(collection)}" for cid in chunk_ids]


def answer_query(
    query: str, config: PipelineConfig, index: RagIndex, gateway: LlmGateway
) -> AnswerTrace:
    """Execute one architecture end to end and return the populated trace."""
    if not query or not query.strip():
        raise ValueError("query must be non-empty")
    started = time.perf_counter()
    stage_latencies: dict[str, float] = {}
    warnings: list[str] = []

    @contextmanager
    def stage(name: str) -> Iterator[None]:
        stage_start = time.perf_counter()
        yield
        stage_latencies[name] = time.perf_counter() - stage_start

    with gateway.span() as llm_span:
        selected_files: list[str] | None = None
        rewritten: str | None = None
        search_query = query
        active_filter: MetadataFilter | None = None

        if config.architecture in (4, 6):
            if index.doc_metadata:
                with stage("file_filter"):
                    selected_files, fail_open, filter_warnings = _filter_files_checked(
                        gateway, query, index.doc_metadata
                    )
                warnings.extend(filter_warnings)
                if not fail_open:
                    active_filter = MetadataFilter(allowed_doc_ids=frozenset(selected_files))
                selected_metas = [
                    index.doc_metadata[d] for d in selected_files if d in index.doc_metadata
                ]
                if selected_metas:
                    with stage("query_rewrite"):
                        rewritten, rewrite_warnings = _rewrite_query_checked(
                            gateway, query, selected_metas
                        )
                    warnings.extend(rewrite_warnings)
                    search_query = rewritten
            else:
                warnings.append(
                    "no document metadata available; skipping file filtering and rewriting"
                )

        retrieve_n = config.expansion.initial_k if config.architecture == 6 else config.k
        reranker_input_size: int | None = None

        with stage("embed_query"):
            query_vector = gateway.embed([search_query])[0]

        if config.architecture == 1:
            with stage("dense_search"):
                hits = index.dense(config.collection).search(query_vector, config.k)
        elif config.architecture == 2:
            with stage("hybrid_search"):
                hits = search_hybrid(
                    search_query,
                    query_vector,
                    index.dense(config.collection),
                    index.lexical(config.collection),
                    config.k,
                    config.hybrid,
                    active_filter,
                )
        else:
            with stage("hybrid_search"):
                pool = search_hybrid(
                    search_query,
                    query_vector,
                    index.dense(config.collection),
                    index.lexical(config.collection),
                    config.candidate_pool,
                    config.hybrid,
                    active_filter,
                )
            reranker_input_size = len(pool)
            top_n = min(retrieve_n, len(pool))
            if not pool:
                hits = []
                warnings.append("retrieval produced no candidates")
            elif config.reranker == "external":
                with stage("rerank"):
                    hits = external_rerank(
                        gateway, search_query, pool, index.chunks, top_n, config.collection
                    )
            elif config.reranker == "metadata":
                with stage("rerank"):
                    hits = metadata_rerank(
                        search_query, pool, index.chunks, top_n, config.rerank_weights
                    )
            else:
                hits = pool[:top_n]

        expansion_added: list[str] = []
        if config.architecture == 6 and hits:
            with stage("expansion"):
                extra = expand_chunks(
                    [index.chunks[sc.chunk_id] for sc in hits],
                    index.chunks,
                    config.expansion.expand_k,
                    frozenset(selected_files) if active_filter is not None else None,
                )
            expansion_added = [c.chunk_id for c in extra]

        context_ids = [sc.chunk_id for sc in hits] + expansion_added
        blocks = context_blocks(index, context_ids, config.collection)
        with stage("generation"):
            answer_text = gateway.chat(
                "generator",
                prompts.SYSTEM_GENERATOR,
                prompts.final_answer_prompt(query, blocks),
            )

    return AnswerTrace(
        original_query=query,
        answer_text=answer_text,
        retrieved=list(hits),
        rewritten_query=rewritten,
        selected_files=selected_files,
        expansion_added=expansion_added,
        reranker_input_size=reranker_input_size,
        stage_latencies_s=stage_latencies,
        total_latency_s=time.perf_counter() - started,
        llm_latency_s=llm_span.total_s,
        warnings=warnings,
    )
