"""Answer the same question under all six pipeline architectures.

Run:  python3 demos/05_pipeline_architectures.py
"""

from _common import demo_index, gateway, rule

from ragmeta.pipelines import ExpansionParams, PipelineConfig, answer_query

QUERY = "How many stores did Harbor Foods open in fiscal 2024?"

LABELS = {
    1: "dense only",
    2: "hybrid",
    3: "hybrid + rerank",
    4: "filter + rewrite + hybrid + rerank",
    5: "hybrid + metadata rerank",
    6: "filter + rewrite + hybrid + rerank + expansion",
}


def main() -> None:
    gw = gateway()
    index = demo_index(gw)

    for arch in range(1, 7):
        config = PipelineConfig(
            architecture=arch,
            collection="contextual" if arch == 5 else "standard",
            k=4,
            candidate_pool=10,
            expansion=ExpansionParams(initial_k=4, expand_k=2),
        )
        trace = answer_query(QUERY, config, index, gw)

        rule(f"Architecture {arch}: {LABELS[arch]}")
        if trace.selected_files is not None:
            print(f"filtered to files: {', '.join(trace.selected_files)}")
        if trace.rewritten_query is not None:
            print(f"search query:      {trace.rewritten_query}")
        ids = [sc.chunk_id for sc in trace.retrieved]
        print(f"retrieved:         {', '.join(ids)}")
        if trace.expansion_added:
            print(f"expansion added:   {', '.join(trace.expansion_added)}")
        stages = ", ".join(sorted(trace.stage_latencies_s))
        print(f"stages timed:      {stages}")
        print(f"answer:            {trace.answer_text}")


if __name__ == "__main__":
    main()
