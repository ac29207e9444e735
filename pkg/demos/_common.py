"""Shared plumbing for the demo scripts.

Every demo runs fully offline against the deterministic mock provider. The
index over ``demos/corpus`` is built once into ``demos/.index`` and reused;
delete that directory to force a rebuild.
"""

from __future__ import annotations

from pathlib import Path

from ragmeta.chunking import ChunkingParams
from ragmeta.enrichment import build_index
from ragmeta.gateway import LlmGateway, ProviderConfig
from ragmeta.storage import RagIndex, load_index

DEMO_DIR = Path(__file__).resolve().parent
CORPUS_DIR = DEMO_DIR / "corpus"
INDEX_DIR = DEMO_DIR / ".index"

# Small budgets so three short reports still yield a few chunks per document.
CHUNKING = ChunkingParams(max_tokens=80, overlap_tokens=16)


def gateway() -> LlmGateway:
    return LlmGateway(ProviderConfig())


def demo_index(gw: LlmGateway | None = None) -> RagIndex:
    gw = gw or gateway()
    if not (INDEX_DIR / "manifest.json").is_file():
        manifest = build_index(CORPUS_DIR, INDEX_DIR, gw, CHUNKING)
        print(f"(built demo index: {manifest.doc_count} docs, {manifest.chunk_count} chunks)\n")
    return load_index(INDEX_DIR)


def rule(title: str) -> None:
    print(f"\n{title}\n{'-' * len(title)}")
