"""Claim-level evaluation of answer quality, plus the benchmark harness.

Answers and ground truths are decomposed into atomic claims by a judge
model; entailment checks between claims, answers, and retrieved context
yield seven metrics per example:

    precision, recall, f1       answer quality against the ground truth
    claim_recall                ground-truth coverage of the retrieved context
    context_precision           fraction of retrieved chunks that are relevant
    faithfulness, hallucination grounding of the answer in the context

Benchmarks macro-average: metrics are computed per example and then
arithmetically averaged, which is why an aggregate f1 is generally not the
harmonic mean of aggregate precision and recall.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from ragmeta import prompts
from ragmeta.corpus import Collection
from ragmeta.gateway import FieldSpec, GatewayError, LlmGateway
from ragmeta.pipelines import AnswerTrace, PipelineConfig, answer_query, context_blocks
from ragmeta.storage import RagIndex

logger = logging.getLogger(__name__)

METRIC_KEYS = (
    "precision",
    "recall",
    "f1",
    "claim_recall",
    "context_precision",
    "faithfulness",
    "hallucination",
)

_CLAIMS_SCHEMA = {"claims": FieldSpec("string_list")}
_VERDICT_SCHEMA = {"verdict": FieldSpec("string")}


@dataclass(frozen=True)
class QaExample:
    question_id: str
    question: str
    ground_truth_answer: str
    evidence_doc_ids: tuple[str, ...] = ()
    evidence_strings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.question.strip():
            raise ValueError(f"example {self.question_id!r} has an empty question")
        if not self.ground_truth_answer.strip():
            raise ValueError(f"example {self.question_id!r} has an empty ground-truth answer")


@dataclass
class EvalRecord:
    question_id: str
    answer_claims: list[str]
    gt_claims: list[str]
    answer_entailed_by_gt: list[bool]
    answer_entailed_by_context: list[bool]
    gt_entailed_by_answer: list[bool]
    gt_entailed_by_context: list[bool]
    context_chunk_ids: list[str]
    chunk_relevance: list[bool]
    metrics: dict[str, float]
    latency_s: float
    degenerate: list[str] = field(default_factory=list)
    judge_failures: int = 0

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "answer_claims": self.answer_claims,
            "gt_claims": self.gt_claims,
            "answer_entailed_by_gt": self.answer_entailed_by_gt,
            "answer_entailed_by_context": self.answer_entailed_by_context,
            "gt_entailed_by_answer": self.gt_entailed_by_answer,
            "gt_entailed_by_context": self.gt_entailed_by_context,
            "context_chunk_ids": self.context_chunk_ids,
            "chunk_relevance": self.chunk_relevance,
            "metrics": self.metrics,
            "latency_s": self.latency_s,
            "degenerate": self.degenerate,
            "judge_failures": self.judge_failures,
        }


class _Judge:
    """Per-example judge session tracking degraded calls."""

    def __init__(self, gateway: LlmGateway) -> None:
        self.gateway = gateway
        self.failures = 0

    def extract(self, text: str) -> list[str]:
        try:
            payload = self.gateway.chat_structured(
                "judge",
                prompts.SYSTEM_JUDGE,
                prompts.claim_extraction_prompt(text),
                _CLAIMS_SCHEMA,
            )
            return payload["claims"]
        except GatewayError as exc:
            self.failures += 1
            logger.warning("claim extraction failed (%s); using the whole text as one claim", exc)
            collapsed = " ".join(text.split())
            return [collapsed] if collapsed else []

    def entails(self, premise: str, claim: str) -> bool:
        if not premise.strip() or not claim.strip():
            return False
        try:
            payload = self.gateway.chat_structured(
                "judge",
                prompts.SYSTEM_JUDGE,
                prompts.entailment_prompt(premise, claim),
                _VERDICT_SCHEMA,
            )
        except GatewayError:
            self.failures += 1
            return False
        verdict = payload["verdict"].strip().lower()
        if verdict.startswith("yes"):
            return True
        if verdict.startswith("no"):
            return False
        self.failures += 1
        return False


def extract_claims(gateway: LlmGateway, text: str) -> list[str]:
    """Decompose text into atomic claims; degrades to one whole-text claim."""
    if not text.strip():
        raise ValueError("text must be non-empty")
    return _Judge(gateway).extract(text)


def entails(gateway: LlmGateway, premise: str, claim: str) -> bool:
    """Yes/no entailment via the judge role; failures count as no."""
    if not premise.strip() or not claim.strip():
        raise ValueError("premise and claim must be non-empty")
    return _Judge(gateway).entails(premise, claim)


def score_example(
    gateway: LlmGateway,
    example: QaExample,
    trace: AnswerTrace,
    index: RagIndex,
    collection: Collection = "standard",
) -> EvalRecord:
    """Score one answered example with the full metric set.

    The context judged here is exactly what the generator saw: the retrieved
    chunks plus any expansion chunks, in rank order, with chunk-id labels.
    """
    judge = _Judge(gateway)
    degenerate: list[str] = []

    answer_claims = judge.extract(trace.answer_text) if trace.answer_text.strip() else []
    gt_claims = judge.extract(example.ground_truth_answer)

    context_ids = [sc.chunk_id for sc in trace.retrieved] + list(trace.expansion_added)
    context_text = "\n\n".join(context_blocks(index, context_ids, collection))

    answer_by_gt = [judge.entails(example.ground_truth_answer, c) for c in answer_claims]
    answer_by_ctx = [judge.entails(context_text, c) for c in answer_claims]
    gt_by_answer = [judge.entails(trace.answer_text, g) for g in gt_claims]
    gt_by_ctx = [judge.entails(context_text, g) for g in gt_claims]
    chunk_relevance = [
        any(judge.entails(index.chunks[cid].collection_text(collection), g) for g in gt_claims)
        for cid in context_ids
    ]

    n_answer, n_gt, n_chunks = len(answer_claims), len(gt_claims), len(context_ids)
    if n_answer == 0:
        degenerate.append("no_answer_claims")
    if n_gt == 0:
        degenerate.append("no_gt_claims")
    if n_chunks == 0:
        degenerate.append("no_context")

    precision = sum(answer_by_gt) / n_answer if n_answer else 0.0
    recall = sum(gt_by_answer) / n_gt if n_gt else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    claim_recall = sum(gt_by_ctx) / n_gt if n_gt else 0.0
    context_precision = sum(chunk_relevance) / n_chunks if n_chunks else 0.0
    faithfulness = sum(answer_by_ctx) / n_answer if n_answer else 0.0
    hallucinated = sum(
        1 for by_gt, by_ctx in zip(answer_by_gt, answer_by_ctx) if not by_gt and not by_ctx
    )
    hallucination = hallucinated / n_answer if n_answer else 0.0

    return EvalRecord(
        question_id=example.question_id,
        answer_claims=answer_claims,
        gt_claims=gt_claims,
        answer_entailed_by_gt=answer_by_gt,
        answer_entailed_by_context=answer_by_ctx,
        gt_entailed_by_answer=gt_by_answer,
        gt_entailed_by_context=gt_by_ctx,
        context_chunk_ids=context_ids,
        chunk_relevance=chunk_relevance,
        metrics={
            "precision": precision,
            "recall": recall,
            "f1": f1,
            "claim_recall": claim_recall,
            "context_precision": context_precision,
            "faithfulness": faithfulness,
            "hallucination": hallucination,
        },
        latency_s=trace.llm_latency_s,
        degenerate=degenerate,
        judge_failures=judge.failures,
    )


def load_dataset(path: str | Path) -> tuple[list[QaExample], list[str]]:
    """Read a JSONL dataset; malformed lines are reported, not fatal.

    Accepts both this package's field names and the public FinanceBench
    names (``financebench_id``, ``answer``, ``doc_name``, ``evidence`` with
    ``evidence_text`` entries).
    """
    examples: list[QaExample] = []
    errors: list[str] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                if not isinstance(row, dict):
                    raise ValueError("line is not a JSON object")
                examples.append(_example_from_row(row, line_no))
            except (ValueError, KeyError, TypeError) as exc:
                errors.append(f"line {line_no}: {exc}")
    for message in errors:
        logger.warning("dataset %s: %s", path, message)
    return examples, errors


def _example_from_row(row: dict, line_no: int) -> QaExample:
    question = row.get("question") or row.get("query")
    answer = row.get("ground_truth_answer") or row.get("answer")
    if not isinstance(question, str) or not question.strip():
        raise ValueError("missing question")
    if not isinstance(answer, str) or not answer.strip():
        raise ValueError("missing ground-truth answer")
    question_id = str(
        row.get("question_id") or row.get("financebench_id") or row.get("id") or f"q{line_no}"
    )
    evidence_docs = row.get("evidence_doc_ids")
    if evidence_docs is None and isinstance(row.get("doc_name"), str):
        evidence_docs = [row["doc_name"]]
    evidence_strings = row.get("evidence_strings")
    if evidence_strings is None and isinstance(row.get("evidence"), list):
        evidence_strings = [
            e["evidence_text"]
            for e in row["evidence"]
            if isinstance(e, dict) and isinstance(e.get("evidence_text"), str)
        ]
    return QaExample(
        question_id=question_id,
        question=question,
        ground_truth_answer=answer,
        evidence_doc_ids=tuple(evidence_docs or ()),
        evidence_strings=tuple(evidence_strings or ()),
    )


@dataclass
class BenchmarkRow:
    label: str
    config: dict
    records: list[EvalRecord]
    aggregates: dict[str, float]
    mean_latency_s: float


@dataclass
class BenchmarkReport:
    rows: list[BenchmarkRow]

    def to_dict(self) -> dict:
        return {
            "metric_keys": list(METRIC_KEYS),
            "rows": [
                {
                    "label": row.label,
                    "config": row.config,
                    "aggregates": row.aggregates,
                    "mean_latency_s": row.mean_latency_s,
                    "records": [r.to_dict() for r in row.records],
                }
                for row in self.rows
            ],
        }

    def to_json_bytes(self) -> bytes:
        return (json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n").encode("utf-8")

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        writer.writerow(["config", *METRIC_KEYS, "mean_latency_s"])
        for row in self.rows:
            writer.writerow(
                [row.label]
                + [repr(row.aggregates[m]) for m in METRIC_KEYS]
                + [repr(row.mean_latency_s)]
            )
        return buffer.getvalue()

    def to_text_table(self) -> str:
        headers = ["config", *METRIC_KEYS, "latency_s"]
        body = [
            [row.label]
            + [f"{row.aggregates[m]:.4f}" for m in METRIC_KEYS]
            + [f"{row.mean_latency_s:.4f}"]
            for row in self.rows
        ]
        widths = [
            max(len(headers[i]), *(len(line[i]) for line in body)) if body else len(headers[i])
            for i in range(len(headers))
        ]
        def render(cells: list[str]) -> str:
            return "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(cells)).rstrip()
        lines = [render(headers), render(["-" * w for w in widths])]
        lines.extend(render(line) for line in body)
        return "\n".join(lines) + "\n"


def _config_summary(config: PipelineConfig) -> dict:
    return {
        "architecture": config.architecture,
        "collection": config.collection,
        "k": config.k,
        "candidate_pool": config.candidate_pool,
        "lambda": config.hybrid.lambda_,
        "reranker": config.reranker,
    }


def run_benchmark(
    gateway: LlmGateway,
    index: RagIndex,
    examples: list[QaExample],
    configs: list[PipelineConfig],
) -> BenchmarkReport:
    """Answer and score every example under every config.

    Examples run concurrently up to the gateway's parallelism ceiling, but
    records keep dataset order and aggregates are means over them.
    """
    if not examples:
        raise ValueError("benchmark dataset is empty")
    if not configs:
        raise ValueError("no pipeline configs to benchmark")
    rows: list[BenchmarkRow] = []
    for position, config in enumerate(configs, start=1):
        label = f"{position:02d}-arch{config.architecture}-{config.collection}-{config.reranker}"

        def evaluate(example: QaExample) -> EvalRecord:
            trace = answer_query(example.question, config, index, gateway)
            return score_example(gateway, example, trace, index, config.collection)

        with ThreadPoolExecutor(max_workers=gateway.config.max_parallel) as executor:
            records = list(executor.map(evaluate, examples))
        aggregates = {
            m: sum(r.metrics[m] for r in records) / len(records) for m in METRIC_KEYS
        }
        mean_latency = sum(r.latency_s for r in records) / len(records)
        rows.append(
            BenchmarkRow(
                label=label,
                config=_config_summary(config),
                records=records,
                aggregates=aggregates,
                mean_latency_s=mean_latency,
            )
        )
    return BenchmarkReport(rows)
