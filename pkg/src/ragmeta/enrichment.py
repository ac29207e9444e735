"""Offline enrichment: from a folder of markdown files to a persisted index.

Each document gets document-level metadata (one-liner, summary, thematic
clusters), each chunk gets chunk-level metadata (parent clusters, entities,
answered questions, retrieval nuggets), and both embedding collections are
produced: one over raw chunk text, one over metadata-prefixed contextual
text.

Failures degrade instead of aborting. A document whose metadata call fails is
indexed without metadata; a chunk whose metadata call fails keeps an empty
record. Both cases are counted in the manifest.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from ragmeta import prompts
from ragmeta.chunking import ChunkingParams, build_contextual_text, split_document
from ragmeta.corpus import (
    EMPTY_CHUNK_METADATA,
    Chunk,
    ChunkMetadata,
    Document,
    DocumentMetadata,
    normalize_label,
)
from ragmeta.gateway import FieldSpec, GatewayError, LlmGateway
from ragmeta.storage import IndexManifest, load_corpus, write_index

logger = logging.getLogger(__name__)

DOC_METADATA_SCHEMA = {
    "one_liner": FieldSpec("string"),
    "summary": FieldSpec("string"),
    "clusters": FieldSpec("string_list", min_items=5, max_items=20),
}

CHUNK_METADATA_SCHEMA = {
    "parent_clusters": FieldSpec("string_list", min_items=1, max_items=2),
    "chunk_entities": FieldSpec("string_list"),
    "answered_questions": FieldSpec("string_list", min_items=3, max_items=10),
    "retrieval_nuggets": FieldSpec("string_list"),
}

DEFAULT_DOC_CHAR_BUDGET = 200_000


def _truncate_head_tail(text: str, char_budget: int) -> str:
    if len(text) <= char_budget:
        return text
    half = max(1, char_budget // 2)
    return text[:half] + "\n\n[... middle truncated ...]\n\n" + text[-half:]


def enrich_document(
    gateway: LlmGateway, doc: Document, char_budget: int = DEFAULT_DOC_CHAR_BUDGET
) -> DocumentMetadata:
    """Produce document-level metadata; raises ``GatewayError`` on failure.

    Oversized documents are sampled head and tail so the prompt stays inside
    the budget; the cluster-count bound (5 to 20) is enforced by the
    structured-output schema.
    """
    sample = _truncate_head_tail(doc.markdown_text, char_budget)
    payload = gateway.chat_structured(
        "enricher",
        prompts.SYSTEM_ENRICHER,
        prompts.doc_metadata_prompt(sample),
        DOC_METADATA_SCHEMA,
    )
    one_liner = " ".join(payload["one_liner"].split())
    return DocumentMetadata(
        one_liner=one_liner,
        summary=payload["summary"],
        clusters=tuple(payload["clusters"]),
    )


def _repair_parent_clusters(
    raw_parents: list[str], doc_clusters: tuple[str, ...]
) -> tuple[str, ...]:
    """Keep only labels that exist in the document's cluster list.

    Matches are resolved to the document's canonical spelling; an empty
    result falls back to the document's first cluster.
    """
    canonical = {normalize_label(c): c for c in doc_clusters}
    repaired: list[str] = []
    for label in raw_parents:
        match = canonical.get(normalize_label(label))
        if match and match not in repaired:
            repaired.append(match)
    if not repaired and doc_clusters:
        repaired = [doc_clusters[0]]
    return tuple(repaired[:2])


def _enrich_chunk_checked(
    gateway: LlmGateway, chunk: Chunk, doc_metadata: DocumentMetadata
) -> tuple[ChunkMetadata, bool]:
    try:
        payload = gateway.chat_structured(
            "enricher",
            prompts.SYSTEM_ENRICHER,
            prompts.chunk_metadata_prompt(chunk.text, doc_metadata.summary, doc_metadata.clusters),
            CHUNK_METADATA_SCHEMA,
        )
    except GatewayError as exc:
        logger.warning("chunk %s: metadata enrichment failed (%s); keeping empty metadata",
                       chunk.chunk_id, exc)
        return EMPTY_CHUNK_METADATA, False
    return (
        ChunkMetadata(
            parent_clusters=_repair_parent_clusters(
                payload["parent_clusters"], doc_metadata.clusters
            ),
            chunk_entities=tuple(payload["chunk_entities"]),
            answered_questions=tuple(payload["answered_questions"]),
            retrieval_nuggets=tuple(payload["retrieval_nuggets"]),
        ),
        True,
    )


def enrich_chunk(
    gateway: LlmGateway, chunk: Chunk, doc_metadata: DocumentMetadata
) -> ChunkMetadata:
    """Produce chunk-level metadata; degrades to an empty record on failure.

    Parent clusters that are not members of the document's cluster list are
    dropped (with a fallback to the first document cluster), so the
    containment invariant holds even when the model invents labels.
    """
    metadata, _ = _enrich_chunk_checked(gateway, chunk, doc_metadata)
    return metadata


def build_index(
    corpus_dir: str | Path,
    out_dir: str | Path,
    gateway: LlmGateway,
    chunking: ChunkingParams | None = None,
    char_budget: int = DEFAULT_DOC_CHAR_BUDGET,
) -> IndexManifest:
    """Run the full offline pipeline and persist the index to ``out_dir``.

    Documents are processed in file-name order and chunks are embedded in
    ordinal order, so two runs over the same corpus with a deterministic
    provider write byte-identical artifacts.
    """
    chunking = chunking or ChunkingParams()
    documents = load_corpus(corpus_dir)
    if not documents:
        raise ValueError(f"no readable .md documents in {corpus_dir}")

    all_chunks: list[Chunk] = []
    doc_metas: dict[str, DocumentMetadata] = {}
    doc_failures: list[str] = []
    chunk_failures = 0

    for doc in documents:
        base_chunks = split_document(doc, chunking)
        try:
            doc_meta: DocumentMetadata | None = enrich_document(gateway, doc, char_budget)
        except GatewayError as exc:
            logger.warning("document %s: metadata enrichment failed (%s); indexing without "
                           "document metadata", doc.doc_id, exc)
            doc_failures.append(doc.doc_id)
            doc_meta = None
        if doc_meta is None:
            enriched = [(EMPTY_CHUNK_METADATA, False)] * len(base_chunks)
        else:
            doc_metas[doc.doc_id] = doc_meta
            with ThreadPoolExecutor(max_workers=gateway.config.max_parallel) as executor:
                enriched = list(
                    executor.map(
                        lambda c: _enrich_chunk_checked(gateway, c, doc_meta), base_chunks
                    )
                )
        for chunk, (metadata, ok) in zip(base_chunks, enriched):
            if not ok:
                chunk_failures += 1
            all_chunks.append(
                replace(
                    chunk,
                    metadata=metadata,
                    contextual_text=build_contextual_text(chunk.text, metadata),
                )
            )

    standard_vectors = np.stack(gateway.embed([c.text for c in all_chunks])).astype("<f4")
    contextual_vectors = np.stack(
        gateway.embed([c.contextual_text for c in all_chunks])
    ).astype("<f4")

    manifest = IndexManifest(
        doc_count=len(documents),
        chunk_count=len(all_chunks),
        embedding_dim=int(standard_vectors.shape[1]),
        max_tokens=chunking.max_tokens,
        overlap_tokens=chunking.overlap_tokens,
        doc_failures=tuple(sorted(doc_failures)),
        chunk_metadata_failures=chunk_failures,
    )
    write_index(
        out_dir,
        all_chunks,
        {d.doc_id: d for d in documents},
        doc_metas,
        standard_vectors,
        contextual_vectors,
        manifest,
    )
    return manifest
