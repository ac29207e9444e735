"""Compare sparse, dense, and fused rankings for one query.

Run:  python3 demos/03_hybrid_search.py
"""

from _common import demo_index, gateway, rule

from ragmeta.hybrid import HybridParams, search_hybrid

QUERY = "How much total liquidity does Northwind Tools have?"
POOL = 8
K = 5


def main() -> None:
    gw = gateway()
    index = demo_index(gw)
    dense = index.dense_standard
    lexical = index.lexical_standard
    qv = gw.embed([QUERY])[0]

    rule(f"Query: {QUERY}")

    sparse_hits = lexical.search(QUERY, K)
    print("\nBM25 only:")
    for h in sparse_hits:
        print(f"  {h.rank}. {h.chunk_id:<26} bm25={h.sparse_score:.4f}")

    dense_hits = dense.search(qv, K)
    print("\nDense cosine only:")
    for h in dense_hits:
        print(f"  {h.rank}. {h.chunk_id:<26} cos={h.dense_score:.4f}")

    for lam in (0.0, 0.5, 1.0):
        hits = search_hybrid(
            QUERY, qv, dense, lexical, k=K,
            params=HybridParams(lambda_=lam, candidate_pool=POOL),
        )
        print(f"\nHybrid, lambda={lam} (pool {POOL}):")
        for h in hits:
            dense_part = "-" if h.dense_score is None else f"{h.dense_score:.3f}"
            sparse_part = "-" if h.sparse_score is None else f"{h.sparse_score:.3f}"
            print(f"  {h.rank}. {h.chunk_id:<26} fused={h.fused_score:.4f} "
                  f"(dense {dense_part}, bm25 {sparse_part})")


if __name__ == "__main__":
    main()
