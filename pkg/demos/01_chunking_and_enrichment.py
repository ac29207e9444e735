"""Follow one document from raw markdown to enriched chunks.

Run:  python3 demos/01_chunking_and_enrichment.py
"""

from _common import CHUNKING, CORPUS_DIR, gateway, rule

from ragmeta.chunking import build_contextual_text, count_tokens, split_document
from ragmeta.enrichment import enrich_chunk, enrich_document
from ragmeta.storage import load_corpus


def main() -> None:
    gw = gateway()
    doc = next(d for d in load_corpus(CORPUS_DIR) if d.doc_id == "northwind_tools")

    rule(f"Document {doc.doc_id!r}")
    print(f"{count_tokens(doc.markdown_text)} tokens of markdown, year={doc.year}")

    chunks = split_document(doc, CHUNKING)
    rule(f"Split into {len(chunks)} chunks (max {CHUNKING.max_tokens} tokens, "
         f"{CHUNKING.overlap_tokens} overlap)")
    for chunk in chunks:
        first_line = chunk.text.splitlines()[0]
        print(f"  {chunk.chunk_id:<22} {count_tokens(chunk.text):>3} tokens  {first_line[:52]}")

    doc_meta = enrich_document(gw, doc)
    rule("Document metadata")
    print(f"one-liner: {doc_meta.one_liner}")
    print(f"clusters ({len(doc_meta.clusters)}): {', '.join(doc_meta.clusters)}")

    chunk = chunks[2]
    chunk_meta = enrich_chunk(gw, chunk, doc_meta)
    rule(f"Chunk metadata for {chunk.chunk_id}")
    print(f"parent clusters: {', '.join(chunk_meta.parent_clusters)}")
    print(f"entities:        {', '.join(chunk_meta.chunk_entities) or '(none)'}")
    for question in chunk_meta.answered_questions:
        print(f"answers:         {question}")

    rule("Contextual text (what the contextual collection indexes)")
    print(build_contextual_text(chunk.text, chunk_meta))


if __name__ == "__main__":
    main()
