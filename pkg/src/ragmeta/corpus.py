"""Core value types shared by every stage of the system.

Everything in here is a plain frozen dataclass: documents and chunks are
immutable once constructed, and downstream stages that need to attach new
information (metadata, scores) build fresh instances instead of mutating.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass
from typing import Literal

Collection = Literal["standard", "contextual"]

_WS_RUN = re.compile(r"\s+")


def normalize_label(label: str) -> str:
    """Canonical form used whenever two metadata labels are compared.

    Applies NFKC unicode normalization, casefolding, and collapses internal
    whitespace runs to a single space. Labels that differ only in case,
    spacing, or compatibility forms compare equal after this.
    """
    folded = unicodedata.normalize("NFKC", label).casefold()
    return _WS_RUN.sub(" ", folded).strip()


@dataclass(frozen=True)
class Document:
    """A single source file, read as markdown text."""

    doc_id: str
    file_name: str
    markdown_text: str
    year: str | None = None
    quarter: str | None = None

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        if not self.markdown_text:
            raise ValueError(f"document {self.doc_id!r} has empty text")


@dataclass(frozen=True)
class DocumentMetadata:
    """Document-level enrichment: a one-line hook, a summary, and thematic clusters."""

    one_liner: str
    summary: str
    clusters: tuple[str, ...]

    def __post_init__(self) -> None:
        if "\n" in self.one_liner:
            raise ValueError("one_liner must be a single line")


@dataclass(frozen=True)
class ChunkMetadata:
    """Chunk-level enrichment attached during indexing.

    All fields default to empty so a chunk whose enrichment failed still has
    a well-formed (if uninformative) metadata record.
    """

    parent_clusters: tuple[str, ...] = ()
    chunk_entities: tuple[str, ...] = ()
    answered_questions: tuple[str, ...] = ()
    retrieval_nuggets: tuple[str, ...] = ()

    def is_empty(self) -> bool:
        return not (
            self.parent_clusters
            or self.chunk_entities
            or self.answered_questions
            or self.retrieval_nuggets
        )


EMPTY_CHUNK_METADATA = ChunkMetadata()


@dataclass(frozen=True)
class Chunk:
    """One retrievable unit of a document.

    ``text`` is the raw slice of the source document (plus overlap from its
    predecessor). ``contextual_text`` is the metadata-prefixed variant that
    the contextual collection embeds; it always ends with ``text`` itself so
    the raw content is never lost.
    """

    chunk_id: str
    doc_id: str
    ordinal: int
    text: str
    metadata: ChunkMetadata = EMPTY_CHUNK_METADATA
    contextual_text: str = ""

    def __post_init__(self) -> None:
        if self.ordinal < 0:
            raise ValueError("ordinal must be >= 0")
        if self.chunk_id != f"{self.doc_id}#{self.ordinal}":
            raise ValueError(
                f"chunk_id {self.chunk_id!r} does not match doc_id/ordinal "
                f"{self.doc_id!r}/{self.ordinal}"
            )
        if not self.text:
            raise ValueError(f"chunk {self.chunk_id!r} has empty text")
        # Default the contextual variant to the plain text; a populated value
        # must preserve the raw chunk verbatim at its tail.
        if not self.contextual_text:
            object.__setattr__(self, "contextual_text", self.text)
        elif not self.contextual_text.endswith(self.text):
            raise ValueError(f"contextual_text of {self.chunk_id!r} must end with the chunk text")

    def collection_text(self, collection: Collection) -> str:
        return self.contextual_text if collection == "contextual" else self.text


@dataclass(frozen=True)
class ScoredChunk:
    """A chunk id with whichever scores the producing stage computed.

    ``rank`` is 1-based within the producing result list. Raw scores are kept
    alongside fused and rerank scores so traces can show how a chunk moved
    through the stages.
    """

    chunk_id: str
    rank: int
    dense_score: float | None = None
    sparse_score: float | None = None
    fused_score: float | None = None
    rerank_score: float | None = None
    rerank_components: dict[str, float] | None = None

    def __post_init__(self) -> None:
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if (
            self.dense_score is None
            and self.sparse_score is None
            and self.fused_score is None
            and self.rerank_score is None
        ):
            raise ValueError(f"scored chunk {self.chunk_id!r} carries no score")

    def best_score(self) -> float:
        """The most refined score available: rerank, then fused, then raw."""
        for value in (self.rerank_score, self.fused_score, self.dense_score, self.sparse_score):
            if value is not None:
                return value
        raise AssertionError("unreachable: ScoredChunk always has a score")


@dataclass(frozen=True)
class MetadataFilter:
    """Constraints applied to candidates during retrieval.

    An empty field means "no constraint on that axis". Label comparisons go
    through :func:`normalize_label`; doc and chunk ids compare exactly.
    ``excluded_chunk_ids`` always applies, whatever else is set.
    """

    allowed_doc_ids: frozenset[str] = frozenset()
    required_clusters: frozenset[str] = frozenset()
    required_entities: frozenset[str] = frozenset()
    excluded_chunk_ids: frozenset[str] = frozenset()

    def matches(self, chunk: Chunk) -> bool:
        if chunk.chunk_id in self.excluded_chunk_ids:
            return False
        if self.allowed_doc_ids and chunk.doc_id not in self.allowed_doc_ids:
            return False
        if self.required_clusters:
            wanted = {normalize_label(c) for c in self.required_clusters}
            have = {normalize_label(c) for c in chunk.metadata.parent_clusters}
            if not (wanted & have):
                return False
        if self.required_entities:
            wanted = {normalize_label(e) for e in self.required_entities}
            have = {normalize_label(e) for e in chunk.metadata.chunk_entities}
            if not (wanted & have):
                return False
        return True

    def is_empty(self) -> bool:
        return not (
            self.allowed_doc_ids
            or self.required_clusters
            or self.required_entities
            or self.excluded_chunk_ids
        )
