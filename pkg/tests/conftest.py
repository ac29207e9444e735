"""Session fixtures: mock gateway, fixture corpus on disk, built index."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from ragmeta.chunking import ChunkingParams
from ragmeta.enrichment import build_index
from ragmeta.gateway import LlmGateway, ProviderConfig
from ragmeta.storage import RagIndex, load_index

import fixture_corpus

# Small enough that every fixture document splits into many chunks; the
# pipeline tests need more than 25 chunks in the index.
SESSION_CHUNKING = ChunkingParams(max_tokens=60, overlap_tokens=10)


def write_fixture_corpus(root: Path) -> None:
    for doc_id, text in fixture_corpus.DOCUMENTS.items():
        (root / f"{doc_id}.md").write_text(text, encoding="utf-8")
    (root / "corpus.json").write_text(
        json.dumps(fixture_corpus.SIDECAR, indent=2), encoding="utf-8"
    )


@pytest.fixture(scope="session")
def mock_gateway() -> LlmGateway:
    return LlmGateway(ProviderConfig())


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory: pytest.TempPathFactory) -> Path:
    root = tmp_path_factory.mktemp("corpus")
    write_fixture_corpus(root)
    return root


@pytest.fixture(scope="session")
def index_dir(
    corpus_dir: Path, tmp_path_factory: pytest.TempPathFactory, mock_gateway: LlmGateway
) -> Path:
    out = tmp_path_factory.mktemp("index")
    manifest = build_index(corpus_dir, out, mock_gateway, SESSION_CHUNKING)
    assert manifest.chunk_count > 25, "fixture corpus must out-size the candidate pool"
    return out


@pytest.fixture(scope="session")
def rag_index(index_dir: Path) -> RagIndex:
    return load_index(index_dir)
