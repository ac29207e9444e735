"""On-disk index layout and corpus loading.

An index directory holds five files:

``manifest.json``
    Format version, counts, embedding dimension, chunking parameters, and
    the analyzer id, plus enrichment failure accounting.
``chunks.jsonl``
    One JSON object per chunk, in ordinal order per document, documents in
    file-name order. Line ``i`` corresponds to row ``i`` of both vector
    blobs.
``vectors_std.f32`` / ``vectors_ctx.f32``
    Row-major little-endian float32 matrices for the standard and contextual
    collections.
``docmeta.json``
    Per-document metadata plus carried source attributes (file name, year,
    quarter).

Lexical postings are rebuilt from the chunks at load time rather than
serialized.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from ragmeta.corpus import Chunk, ChunkMetadata, Collection, Document, DocumentMetadata
from ragmeta.dense import VectorIndex, VectorRecord
from ragmeta.lexical import ANALYZER_ID, LexicalIndex

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

MANIFEST_FILE = "manifest.json"
CHUNKS_FILE = "chunks.jsonl"
VECTORS_STANDARD_FILE = "vectors_std.f32"
VECTORS_CONTEXTUAL_FILE = "vectors_ctx.f32"
DOCMETA_FILE = "docmeta.json"

CORPUS_SIDECAR = "corpus.json"


@dataclass(frozen=True)
class IndexManifest:
    doc_count: int
    chunk_count: int
    embedding_dim: int
    max_tokens: int
    overlap_tokens: int
    format_version: int = FORMAT_VERSION
    analyzer: str = ANALYZER_ID
    collections: tuple[str, ...] = ("standard", "contextual")
    doc_failures: tuple[str, ...] = ()
    chunk_metadata_failures: int = 0

    def to_dict(self) -> dict:
        data = asdict(self)
        data["collections"] = list(self.collections)
        data["doc_failures"] = list(self.doc_failures)
        return data

    @classmethod
    def from_dict(cls, data: Mapping) -> "IndexManifest":
        return cls(
            doc_count=int(data["doc_count"]),
            chunk_count=int(data["chunk_count"]),
            embedding_dim=int(data["embedding_dim"]),
            max_tokens=int(data["max_tokens"]),
            overlap_tokens=int(data["overlap_tokens"]),
            format_version=int(data["format_version"]),
            analyzer=str(data["analyzer"]),
            collections=tuple(data["collections"]),
            doc_failures=tuple(data["doc_failures"]),
            chunk_metadata_failures=int(data["chunk_metadata_failures"]),
        )


def load_corpus(corpus_dir: str | Path) -> list[Document]:
    """Read every ``.md`` file in the directory, sorted by file name.

    Unreadable or empty files are skipped with a warning. An optional
    ``corpus.json`` sidecar maps ``doc_id`` to source attributes
    (``year``, ``quarter``).
    """
    root = Path(corpus_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus directory {root} does not exist")
    attributes: dict[str, dict] = {}
    sidecar = root / CORPUS_SIDECAR
    if sidecar.is_file():
        try:
            attributes = json.loads(sidecar.read_text(encoding="utf-8"))
        except (ValueError, OSError) as exc:
            logger.warning("ignoring unreadable corpus sidecar %s: %s", sidecar, exc)
    documents: list[Document] = []
    for path in sorted(root.glob("*.md")):
        try:
            text = path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            logger.warning("skipping unreadable file %s: %s", path.name, exc)
            continue
        if not text:
            logger.warning("skipping empty file %s", path.name)
            continue
        doc_id = path.stem
        attrs = attributes.get(doc_id, {})
        documents.append(
            Document(
                doc_id=doc_id,
                file_name=path.name,
                markdown_text=text,
                year=attrs.get("year"),
                quarter=attrs.get("quarter"),
            )
        )
    return documents


def _chunk_to_record(chunk: Chunk) -> dict:
    return {
        "chunk_id": chunk.chunk_id,
        "doc_id": chunk.doc_id,
        "ordinal": chunk.ordinal,
        "text": chunk.text,
        "contextual_text": chunk.contextual_text,
        "metadata": {
            "parent_clusters": list(chunk.metadata.parent_clusters),
            "chunk_entities": list(chunk.metadata.chunk_entities),
            "answered_questions": list(chunk.metadata.answered_questions),
            "retrieval_nuggets": list(chunk.metadata.retrieval_nuggets),
        },
    }


def _chunk_from_record(record: Mapping) -> Chunk:
    meta = record["metadata"]
    return Chunk(
        chunk_id=record["chunk_id"],
        doc_id=record["doc_id"],
        ordinal=int(record["ordinal"]),
        text=record["text"],
        metadata=ChunkMetadata(
            parent_clusters=tuple(meta["parent_clusters"]),
            chunk_entities=tuple(meta["chunk_entities"]),
            answered_questions=tuple(meta["answered_questions"]),
            retrieval_nuggets=tuple(meta["retrieval_nuggets"]),
        ),
        contextual_text=record["contextual_text"],
    )


def write_index(
    out_dir: str | Path,
    chunks: list[Chunk],
    documents: Mapping[str, Document],
    doc_metas: Mapping[str, DocumentMetadata],
    standard_vectors: np.ndarray,
    contextual_vectors: np.ndarray,
    manifest: IndexManifest,
) -> None:
    """Persist all index artifacts; writes are deterministic given inputs."""
    if standard_vectors.shape != contextual_vectors.shape:
        raise ValueError("vector collections must have identical shapes")
    if standard_vectors.shape[0] != len(chunks):
        raise ValueError(
            f"vector rows ({standard_vectors.shape[0]}) != chunk count ({len(chunks)})"
        )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / CHUNKS_FILE).open("w", encoding="utf-8") as fh:
        for chunk in chunks:
            fh.write(json.dumps(_chunk_to_record(chunk), sort_keys=True, ensure_ascii=False))
            fh.write("\n")
    (out / VECTORS_STANDARD_FILE).write_bytes(
        np.ascontiguousarray(standard_vectors, dtype="<f4").tobytes()
    )
    (out / VECTORS_CONTEXTUAL_FILE).write_bytes(
        np.ascontiguousarray(contextual_vectors, dtype="<f4").tobytes()
    )
    doc_records = {}
    for doc_id, meta in doc_metas.items():
        doc = documents.get(doc_id)
        doc_records[doc_id] = {
            "one_liner": meta.one_liner,
            "summary": meta.summary,
            "clusters": list(meta.clusters),
            "file_name": doc.file_name if doc else None,
            "year": doc.year if doc else None,
            "quarter": doc.quarter if doc else None,
        }
    (out / DOCMETA_FILE).write_text(
        json.dumps(doc_records, sort_keys=True, ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )
    (out / MANIFEST_FILE).write_text(
        json.dumps(manifest.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


@dataclass
class RagIndex:
    """Everything the online stages need, loaded into memory."""

    manifest: IndexManifest
    chunks: dict[str, Chunk]
    chunk_ids: list[str]
    doc_metadata: dict[str, DocumentMetadata]
    doc_attributes: dict[str, dict]
    dense_standard: VectorIndex = field(repr=False)
    dense_contextual: VectorIndex = field(repr=False)
    lexical_standard: LexicalIndex = field(repr=False)
    lexical_contextual: LexicalIndex = field(repr=False)

    @property
    def doc_ids(self) -> list[str]:
        return sorted({c.doc_id for c in self.chunks.values()})

    def dense(self, collection: Collection) -> VectorIndex:
        return self.dense_contextual if collection == "contextual" else self.dense_standard

    def lexical(self, collection: Collection) -> LexicalIndex:
        return self.lexical_contextual if collection == "contextual" else self.lexical_standard


def _read_vectors(path: Path, rows: int, dim: int) -> np.ndarray:
    blob = path.read_bytes()
    expected = rows * dim * 4
    if len(blob) != expected:
        raise ValueError(f"{path.name} holds {len(blob)} bytes, expected {expected}")
    return np.frombuffer(blob, dtype="<f4").reshape(rows, dim)


def load_index(index_dir: str | Path) -> RagIndex:
    """Load a persisted index; lexical postings are rebuilt from the chunks."""
    root = Path(index_dir)
    manifest_path = root / MANIFEST_FILE
    if not manifest_path.is_file():
        raise FileNotFoundError(f"{root} does not contain an index ({MANIFEST_FILE} missing)")
    manifest = IndexManifest.from_dict(json.loads(manifest_path.read_text(encoding="utf-8")))

    chunks: dict[str, Chunk] = {}
    with (root / CHUNKS_FILE).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                chunk = _chunk_from_record(json.loads(line))
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{CHUNKS_FILE} line {line_no + 1} is corrupt: {exc}") from exc
            if chunk.chunk_id in chunks:
                raise ValueError(f"{CHUNKS_FILE} contains duplicate id {chunk.chunk_id!r}")
            chunks[chunk.chunk_id] = chunk
    if len(chunks) != manifest.chunk_count:
        raise ValueError(
            f"{CHUNKS_FILE} holds {len(chunks)} chunks, manifest says {manifest.chunk_count}"
        )

    chunk_ids = list(chunks)
    std = _read_vectors(root / VECTORS_STANDARD_FILE, manifest.chunk_count, manifest.embedding_dim)
    ctx = _read_vectors(
        root / VECTORS_CONTEXTUAL_FILE, manifest.chunk_count, manifest.embedding_dim
    )
    dense_std = VectorIndex(chunks)
    dense_ctx = VectorIndex(chunks)
    for i, cid in enumerate(chunk_ids):
        dense_std.add(VectorRecord(cid, std[i]))
        dense_ctx.add(VectorRecord(cid, ctx[i]))

    doc_records = json.loads((root / DOCMETA_FILE).read_text(encoding="utf-8"))
    doc_metadata = {
        doc_id: DocumentMetadata(
            one_liner=rec["one_liner"],
            summary=rec["summary"],
            clusters=tuple(rec["clusters"]),
        )
        for doc_id, rec in doc_records.items()
    }
    doc_attributes = {
        doc_id: {k: rec.get(k) for k in ("file_name", "year", "quarter")}
        for doc_id, rec in doc_records.items()
    }

    return RagIndex(
        manifest=manifest,
        chunks=chunks,
        chunk_ids=chunk_ids,
        doc_metadata=doc_metadata,
        doc_attributes=doc_attributes,
        dense_standard=dense_std,
        dense_contextual=dense_ctx,
        lexical_standard=LexicalIndex(chunks.values(), "standard"),
        lexical_contextual=LexicalIndex(chunks.values(), "contextual"),
    )
