"""Score three retrieval configurations over a small QA set.

Run:  python3 demos/06_benchmark.py
"""

from _common import demo_index, gateway, rule

from ragmeta.evaluation import QaExample, run_benchmark
from ragmeta.pipelines import PipelineConfig

EXAMPLES = [
    QaExample(
        "q1",
        "How much total liquidity does Northwind Tools have?",
        "The company ended the year with 210 million dollars of cash and an undrawn "
        "150 million dollar revolving credit facility, for total liquidity of 360 "
        "million dollars.",
        evidence_doc_ids=("northwind_tools",),
    ),
    QaExample(
        "q2",
        "How many stores did Harbor Foods open in fiscal 2024?",
        "Harbor Foods opened 57 new stores and closed 12 underperforming locations "
        "in fiscal 2024, ending the year with 612 stores.",
        evidence_doc_ids=("harbor_foods",),
    ),
    QaExample(
        "q3",
        "By how much did Cobalt Energy reduce net debt?",
        "Net debt was reduced by 310 million dollars during fiscal 2024, ending at "
        "1.1 billion dollars.",
        evidence_doc_ids=("cobalt_energy",),
    ),
]

CONFIGS = [
    PipelineConfig(architecture=2, k=4, candidate_pool=10),
    PipelineConfig(architecture=3, k=4, candidate_pool=10),
    PipelineConfig(architecture=5, collection="contextual", k=4, candidate_pool=10),
]


def main() -> None:
    gw = gateway()
    index = demo_index(gw)

    report = run_benchmark(gw, index, EXAMPLES, CONFIGS)
    rule("Aggregate metrics")
    print(report.to_text_table(), end="")

    rule("Per-example F1 under the first config")
    for record in report.rows[0].records:
        claims = "; ".join(record.answer_claims)
        print(f"  {record.question_id}: f1={record.metrics['f1']:.3f}  claims: {claims[:90]}")


if __name__ == "__main__":
    main()
