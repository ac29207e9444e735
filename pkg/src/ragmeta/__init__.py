"""Metadata-driven hybrid retrieval with multi-stage RAG pipelines.

The package is organised around one offline path and one online path.
Offline, :mod:`ragmeta.enrichment` turns a folder of markdown filings into a
persisted index: chunks, LLM-generated metadata, and two embedding
collections (plain chunk text and metadata-prefixed contextual text).
Online, :mod:`ragmeta.pipelines` answers questions over that index through
six retrieval architectures of increasing complexity, and
:mod:`ragmeta.evaluation` scores the answers with a claim-level judge.
"""

from ragmeta.corpus import (
    Chunk,
    ChunkMetadata,
    Document,
    DocumentMetadata,
    MetadataFilter,
    ScoredChunk,
    normalize_label,
)
from ragmeta.chunking import ChunkingParams, build_contextual_text, count_tokens, split_document
from ragmeta.lexical import Bm25Params, LexicalIndex, analyze
from ragmeta.dense import VectorIndex, VectorRecord, cosine_similarity
from ragmeta.hybrid import HybridParams, search_hybrid
from ragmeta.gateway import (
    GatewayError,
    LlmGateway,
    MockProvider,
    ProviderConfig,
    ProviderConfigError,
    StructuredOutputError,
    TransportError,
)
from ragmeta.rerank import RerankWeights, external_rerank, metadata_rerank
from ragmeta.pipelines import AnswerTrace, ExpansionParams, PipelineConfig, answer_query
from ragmeta.enrichment import build_index, enrich_chunk, enrich_document
from ragmeta.storage import RagIndex, load_corpus, load_index
from ragmeta.evaluation import BenchmarkReport, EvalRecord, QaExample, run_benchmark, score_example

__version__ = "0.1.0"

__all__ = [
    "AnswerTrace",
    "BenchmarkReport",
    "Bm25Params",
    "Chunk",
    "ChunkMetadata",
    "ChunkingParams",
    "Document",
    "DocumentMetadata",
    "EvalRecord",
    "ExpansionParams",
    "GatewayError",
    "HybridParams",
    "LexicalIndex",
    "LlmGateway",
    "MetadataFilter",
    "MockProvider",
    "PipelineConfig",
    "ProviderConfig",
    "ProviderConfigError",
    "QaExample",
    "RagIndex",
    "RerankWeights",
    "ScoredChunk",
    "StructuredOutputError",
    "TransportError",
    "VectorIndex",
    "VectorRecord",
    "analyze",
    "answer_query",
    "build_contextual_text",
    "build_index",
    "cosine_similarity",
    "count_tokens",
    "enrich_chunk",
    "enrich_document",
    "external_rerank",
    "load_corpus",
    "load_index",
    "metadata_rerank",
    "normalize_label",
    "run_benchmark",
    "score_example",
    "search_hybrid",
    "split_document",
    "__version__",
]
