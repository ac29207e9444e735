"""Build the two-collection index and inspect what lands on disk.

Run:  python3 demos/02_build_index.py
"""

import shutil

from _common import CHUNKING, CORPUS_DIR, INDEX_DIR, gateway, rule

from ragmeta.enrichment import build_index
from ragmeta.storage import load_index


def main() -> None:
    shutil.rmtree(INDEX_DIR, ignore_errors=True)
    manifest = build_index(CORPUS_DIR, INDEX_DIR, gateway(), CHUNKING)

    rule("Manifest")
    print(f"documents:      {manifest.doc_count}")
    print(f"chunks:         {manifest.chunk_count}")
    print(f"embedding dim:  {manifest.embedding_dim}")
    print(f"analyzer:       {manifest.analyzer}")
    print(f"doc failures:   {len(manifest.doc_failures)}; "
          f"chunk failures: {manifest.chunk_metadata_failures}")

    rule("Files")
    for path in sorted(INDEX_DIR.iterdir()):
        print(f"  {path.name:<18} {path.stat().st_size:>8} bytes")

    index = load_index(INDEX_DIR)
    rule("One chunk, both collections")
    cid = index.chunk_ids[0]
    chunk = index.chunks[cid]
    print(f"[standard]   {chunk.collection_text('standard')[:120]}...")
    print(f"[contextual] {chunk.collection_text('contextual')[:120]}...")


if __name__ == "__main__":
    main()
