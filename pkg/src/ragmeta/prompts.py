"""Prompt templates for every LLM task in the system.

Each user prompt opens with a ``TASK: <name>`` line and carries its inputs in
named ``<<<SECTION>>>`` blocks. Real models simply see clearly delimited
input; the offline mock provider parses the same markers to produce
deterministic, content-derived replies.
"""

from __future__ import annotations

import re

TASK_DOC_METADATA = "document_metadata"
TASK_CHUNK_METADATA = "chunk_metadata"
TASK_FILE_FILTER = "file_filter"
TASK_QUERY_REWRITE = "query_rewrite"
TASK_FINAL_ANSWER = "final_answer"
TASK_CLAIM_EXTRACTION = "claim_extraction"
TASK_ENTAILMENT = "entailment"

_TASK_RE = re.compile(r"^TASK: ([a-z_]+)\s*$", re.MULTILINE)


def section(name: str, content: str) -> str:
    return f"<<<{name}>>>\n{content}\n<<</{name}>>>"


def extract_section(prompt: str, name: str) -> str | None:
    """Pull one named section's content back out of a rendered prompt."""
    marker = re.compile(
        rf"<<<{re.escape(name)}>>>\n(.*?)\n<<</{re.escape(name)}>>>", re.DOTALL
    )
    match = marker.search(prompt)
    return match.group(1) if match else None


def extract_task(prompt: str) -> str | None:
    match = _TASK_RE.search(prompt)
    return match.group(1) if match else None


SYSTEM_ENRICHER = (
    "You are a meticulous financial-document analyst. You reply exactly in the "
    "format each task requests, with no preamble."
)

SYSTEM_PIPELINE_HELPER = (
    "You are a retrieval assistant that routes and reformulates questions over "
    "a document collection. You reply exactly in the format each task requests."
)

SYSTEM_GENERATOR = (
    "You are a careful financial analyst. Answer strictly from the provided "
    "context, quote figures exactly as they appear, and cite the id of each "
    "supporting chunk in square brackets."
)

SYSTEM_JUDGE = (
    "You are a strict verification judge. You reply exactly in the format each "
    "task requests, with no commentary."
)


def doc_metadata_prompt(document_text: str) -> str:
    return (
        f"TASK: {TASK_DOC_METADATA}\n"
        "Read the document and produce document-level metadata.\n"
        "Reply with a single JSON object with exactly these keys:\n"
        '  "one_liner": one sentence naming the company, period, and document type,\n'
        '  "summary": a dense analytical brief of the main findings,\n'
        '  "clusters": a list of 5 to 20 short high-level thematic labels.\n'
        f"{section('DOCUMENT', document_text)}"
    )


def chunk_metadata_prompt(chunk_text: str, summary: str, clusters: tuple[str, ...]) -> str:
    return (
        f"TASK: {TASK_CHUNK_METADATA}\n"
        "Read one chunk of a larger document and produce chunk-level metadata.\n"
        "Reply with a single JSON object with exactly these keys:\n"
        '  "parent_clusters": 1 or 2 labels, chosen only from the provided cluster list,\n'
        '  "chunk_entities": named entities appearing in the chunk,\n'
        '  "answered_questions": 3 to 10 questions this chunk can answer,\n'
        '  "retrieval_nuggets": short standalone facts useful for retrieval.\n'
        f"{section('SUMMARY', summary)}\n"
        f"{section('CLUSTERS', '; '.join(clusters))}\n"
        f"{section('CHUNK', chunk_text)}"
    )


def file_filter_prompt(query: str, file_lines: list[str]) -> str:
    return (
        f"TASK: {TASK_FILE_FILTER}\n"
        "Select every file that plausibly contains the answer to the question.\n"
        'Reply with a single JSON object: {"selected_files": [<doc_id>, ...]}.\n'
        f"{section('QUESTION', query)}\n"
        f"{section('FILES', chr(10).join(file_lines))}"
    )


def query_rewrite_prompt(query: str, notes: str) -> str:
    return (
        f"TASK: {TASK_QUERY_REWRITE}\n"
        "Rewrite the question as a single retrieval-friendly search query, "
        "enriched with concrete terms from the document notes. Reply with the "
        "rewritten query only, on one line.\n"
        f"{section('QUESTION', query)}\n"
        f"{section('NOTES', notes)}"
    )


def final_answer_prompt(query: str, context_blocks: list[str]) -> str:
    return (
        f"TASK: {TASK_FINAL_ANSWER}\n"
        "Answer the question using only the context below. Quote figures "
        "exactly, keep the answer concise, and cite supporting chunk ids in "
        "square brackets. If the context is insufficient, say so.\n"
        f"{section('QUESTION', query)}\n"
        f"{section('CONTEXT', (chr(10) * 2).join(context_blocks))}"
    )


def claim_extraction_prompt(text: str) -> str:
    return (
        f"TASK: {TASK_CLAIM_EXTRACTION}\n"
        "Decompose the text into short, self-contained factual claims.\n"
        'Reply with a single JSON object: {"claims": [<claim>, ...]}.\n'
        f"{section('TEXT', text)}"
    )


def entailment_prompt(premise: str, claim: str) -> str:
    return (
        f"TASK: {TASK_ENTAILMENT}\n"
        "Decide whether the premise fully supports the claim.\n"
        'Reply with a single JSON object: {"verdict": "yes"} or {"verdict": "no"}.\n'
        f"{section('PREMISE', premise)}\n"
        f"{section('CLAIM', claim)}"
    )
