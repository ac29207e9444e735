"""Rerank a hybrid candidate pool with the four metadata components.

Run:  python3 demos/04_metadata_rerank.py
"""

from _common import demo_index, gateway, rule

from ragmeta.hybrid import HybridParams, search_hybrid
from ragmeta.rerank import RerankWeights, external_rerank, metadata_rerank

QUERY = "How much net debt does Cobalt Energy carry?"
POOL = 10
K = 5


def main() -> None:
    gw = gateway()
    index = demo_index(gw)
    qv = gw.embed([QUERY])[0]
    candidates = search_hybrid(
        QUERY, qv, index.dense_contextual, index.lexical_contextual, k=POOL,
        params=HybridParams(candidate_pool=POOL),
    )

    rule(f"Query: {QUERY}")
    print(f"\nFused candidate pool ({POOL}):")
    for h in candidates:
        print(f"  {h.rank}. {h.chunk_id:<26} fused={h.fused_score:.4f}")

    ranked = metadata_rerank(QUERY, candidates, index.chunks, top_n=K)
    print("\nMetadata rerank (equal weights), component breakdown:")
    print(f"  {'chunk':<28} {'score':>6} {'ent_frq':>8} {'cluster':>8} {'ent_qry':>8} {'retr':>6}")
    for h in ranked:
        c = h.rerank_components
        print(f"  {h.rank}. {h.chunk_id:<24} {h.rerank_score:6.3f} "
              f"{c['entity_freq']:8.3f} {c['cluster_coherence']:8.3f} "
              f"{c['entity_query']:8.3f} {c['retrieval']:6.3f}")

    heavy_query = metadata_rerank(
        QUERY, candidates, index.chunks, top_n=K,
        weights=RerankWeights(0.1, 0.1, 0.7, 0.1),
    )
    print("\nSame pool, entity-query weight 0.7:")
    for h in heavy_query:
        print(f"  {h.rank}. {h.chunk_id:<26} score={h.rerank_score:.3f}")

    scored = external_rerank(gw, QUERY, candidates, index.chunks, top_n=K,
                             collection="contextual")
    print("\nExternal (model-scored) rerank for comparison:")
    for h in scored:
        print(f"  {h.rank}. {h.chunk_id:<26} score={h.rerank_score:.3f}")


if __name__ == "__main__":
    main()
