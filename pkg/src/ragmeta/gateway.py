"""LLM access for every stage, behind one narrow gateway.

The gateway owns role-to-model routing, bounded parallelism, transport
retries, latency accounting, and structured-output validation with a single
repair round. Providers only know how to move prompts and vectors.

Two providers ship in the box: an OpenAI-compatible HTTP client and a fully
offline mock whose replies are pure functions of the prompt content. The mock
parses the ``TASK:`` marker and named sections that the prompt templates
emit, so the whole system runs deterministically with no network.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Mapping, Protocol, Sequence

import numpy as np
import requests

from ragmeta import prompts
from ragmeta.lexical import analyze

ROLES = ("generator", "pipeline_helper", "enricher", "judge", "embedder", "reranker")

MOCK_EMBEDDING_DIM = 64

_MOCK_STOPWORDS = frozenset(
    "the a an is are was were be been of and or to in on for with as by at it "
    "its this that these those".split()
)

_DISCOURSE_MARKERS = (
    "however",
    "moreover",
    "additionally",
    "in addition",
    "furthermore",
    "finally",
    "overall",
    "therefore",
    "thus",
    "also",
    "meanwhile",
)


class GatewayError(Exception):
    """Base for everything raised by the gateway layer."""


class ProviderConfigError(GatewayError):
    pass


class TransportError(GatewayError):
    pass


class StructuredOutputError(GatewayError):
    pass


@dataclass(frozen=True)
class ProviderConfig:
    kind: str = "mock"
    base_url: str = ""
    api_key_env: str = "LLM_API_KEY"
    model_names: Mapping[str, str] = field(default_factory=lambda: {r: "mock" for r in ROLES})
    timeout_s: float = 30.0
    max_parallel: int = 4
    retry_attempts: int = 3
    retry_backoff_s: float = 0.5

    def __post_init__(self) -> None:
        if self.kind not in ("mock", "openai"):
            raise ProviderConfigError(f"unknown provider kind {self.kind!r}")
        if self.kind == "openai" and not self.base_url:
            raise ProviderConfigError("openai provider requires base_url")
        if self.timeout_s <= 0:
            raise ProviderConfigError("timeout_s must be positive")
        if self.max_parallel < 1:
            raise ProviderConfigError("max_parallel must be >= 1")
        if self.retry_attempts < 1:
            raise ProviderConfigError("retry_attempts must be >= 1")
        if self.retry_backoff_s < 0:
            raise ProviderConfigError("retry_backoff_s must be >= 0")


@dataclass(frozen=True)
class FieldSpec:
    """Schema entry for structured replies: a string or a list of strings."""

    kind: str  # "string" | "string_list"
    min_items: int | None = None
    max_items: int | None = None


@dataclass(frozen=True)
class CallRecord:
    role: str
    op: str
    seconds: float
    attempts: int


class LatencySpan:
    """Accumulates the gateway time spent while the span is active."""

    def __init__(self) -> None:
        self.total_s = 0.0
        self.calls = 0

    def _add(self, seconds: float) -> None:
        self.total_s += seconds
        self.calls += 1


class Provider(Protocol):
    embed_batch_size: int
    deterministic_latency: bool

    def complete(self, model: str, system_prompt: str, user_prompt: str) -> str: ...

    def embed(self, model: str, texts: Sequence[str]) -> list[list[float]]: ...

    def rerank(
        self, model: str, query: str, documents: Sequence[str], top_n: int
    ) -> list[tuple[int, float]]: ...


def _hash_vector(key: str) -> np.ndarray:
    """64 floats in [-1, 1], a pure function of the key string."""
    digest = hashlib.sha512(key.encode("utf-8")).digest()
    return (np.frombuffer(digest, dtype=np.uint8).astype(np.float64) - 127.5) / 127.5


def _collapse_ws(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip()


def _sentences(text: str) -> list[str]:
    parts = re.split(r"(?<=[.!?])\s+", text.strip())
    return [p.strip() for p in parts if p.strip()]


def _content_tokens(text: str) -> set[str]:
    return {t for t in analyze(text) if t not in _MOCK_STOPWORDS}


class MockProvider:
    """Offline provider with deterministic, content-derived behaviour.

    Replies are seeded by hashes of the prompt content, never by RNG state,
    so two processes given the same inputs produce identical outputs.

    ``responses`` is an ordered list of ``(substring, reply)`` pairs checked
    against the user prompt before any synthesis; the first match wins.
    ``fail_tasks`` forces a transport error for the named prompt tasks.
    """

    embed_batch_size = 256
    deterministic_latency = True

    def __init__(
        self,
        responses: Sequence[tuple[str, str]] = (),
        fail_tasks: frozenset[str] | set[str] = frozenset(),
    ) -> None:
        self.responses = list(responses)
        self.fail_tasks = frozenset(fail_tasks)

    # -- transport surface -------------------------------------------------

    def complete(self, model: str, system_prompt: str, user_prompt: str) -> str:
        task = prompts.extract_task(user_prompt)
        if task in self.fail_tasks:
            raise TransportError(f"mock transport failure (task {task})")
        for needle, reply in self.responses:
            if needle in user_prompt:
                return reply
        if task == prompts.TASK_DOC_METADATA:
            return self._doc_metadata(user_prompt)
        if task == prompts.TASK_CHUNK_METADATA:
            return self._chunk_metadata(user_prompt)
        if task == prompts.TASK_FILE_FILTER:
            return self._file_filter(user_prompt)
        if task == prompts.TASK_QUERY_REWRITE:
            return self._query_rewrite(user_prompt)
        if task == prompts.TASK_FINAL_ANSWER:
            return self._final_answer(user_prompt)
        if task == prompts.TASK_CLAIM_EXTRACTION:
            return self._claim_extraction(user_prompt)
        if task == prompts.TASK_ENTAILMENT:
            return self._entailment(user_prompt)
        digest = hashlib.sha256(user_prompt.encode("utf-8")).hexdigest()[:12]
        return f"MOCK[{digest}]"

    def embed(self, model: str, texts: Sequence[str]) -> list[list[float]]:
        return [self._embed_one(t) for t in texts]

    def rerank(
        self, model: str, query: str, documents: Sequence[str], top_n: int
    ) -> list[tuple[int, float]]:
        query_terms = set(analyze(query))
        scored = [
            (len(query_terms & set(analyze(doc))) / max(1, len(query_terms)), i)
            for i, doc in enumerate(documents)
        ]
        ranked = sorted(scored, key=lambda t: (-t[0], t[1]))
        return [(i, s) for s, i in ranked[:top_n]]

    # -- task synthesis ----------------------------------------------------

    def _embed_one(self, text: str) -> list[float]:
        vec = 0.25 * _hash_vector("txt:" + text)
        for token in analyze(text):
            vec = vec + _hash_vector("tok:" + token)
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            vec = _hash_vector("txt:" + text)
            norm = float(np.linalg.norm(vec))
        return list(vec / norm)

    def _doc_metadata(self, prompt: str) -> str:
        document = prompts.extract_section(prompt, "DOCUMENT") or ""
        lines = [ln.strip() for ln in document.splitlines() if ln.strip()]
        first = _collapse_ws(lines[0].lstrip("# ").strip()) if lines else "Untitled document"
        one_liner = first[:160]
        if one_liner and one_liner[-1] not in ".!?":
            one_liner += "."
        summary = _collapse_ws(" ".join(lines[:5]))[:500] or one_liner
        clusters: list[str] = []
        for match in re.finditer(r"^#{1,6}\s+(.+)$", document, re.MULTILINE):
            label = _collapse_ws(match.group(1).strip("# "))
            if label and label.casefold() not in {c.casefold() for c in clusters}:
                clusters.append(label)
        if len(clusters) < 5:
            counts: dict[str, int] = {}
            for token in analyze(document):
                if token not in _MOCK_STOPWORDS and len(token) > 2:
                    counts[token] = counts.get(token, 0) + 1
            used = {c.casefold() for c in clusters}
            for token, _ in sorted(counts.items(), key=lambda t: (-t[1], t[0])):
                label = token.capitalize()
                if label.casefold() not in used:
                    clusters.append(label)
                    used.add(label.casefold())
                if len(clusters) >= 5:
                    break
        index = 1
        while len(clusters) < 5:
            clusters.append(f"Topic {index}")
            index += 1
        return json.dumps(
            {"one_liner": one_liner, "summary": summary, "clusters": clusters[:20]}
        )

    def _chunk_metadata(self, prompt: str) -> str:
        chunk = prompts.extract_section(prompt, "CHUNK") or ""
        cluster_list = [
            c.strip()
            for c in (prompts.extract_section(prompt, "CLUSTERS") or "").split(";")
            if c.strip()
        ]
        chunk_tokens = set(analyze(chunk))
        parents = [
            c for c in cluster_list if _content_tokens(c) & chunk_tokens
        ][:2]
        if not parents and cluster_list:
            parents = [cluster_list[0]]
        entities: list[str] = []
        seen = set()
        for match in re.finditer(
            r"\b[A-Z][A-Za-z0-9&.\-]*(?: [A-Z][A-Za-z0-9&.\-]*)*", chunk
        ):
            candidate = match.group(0).strip(".-")
            if len(candidate) < 2 or candidate.casefold() in _MOCK_STOPWORDS:
                continue
            if candidate.casefold() in seen:
                continue
            seen.add(candidate.casefold())
            entities.append(candidate)
            if len(entities) >= 10:
                break
        subjects = entities[:3] or parents[:3] or ["this section"]
        questions = [f"What does the document say about {s}?" for s in subjects]
        fillers = (
            "What period does this section cover?",
            "Which figures appear in this section?",
            "What topic is discussed in this section?",
        )
        for filler in fillers:
            if len(questions) >= 3:
                break
            questions.append(filler)
        nuggets: list[str] = []
        first_sentence = next(iter(_sentences(chunk)), "")
        if first_sentence:
            nuggets.append(_collapse_ws(first_sentence)[:200])
        if entities:
            nuggets.append("Key items: " + ", ".join(entities[:3]))
        return json.dumps(
            {
                "parent_clusters": parents,
                "chunk_entities": entities,
                "answered_questions": questions[:10],
                "retrieval_nuggets": nuggets,
            }
        )

    def _file_filter(self, prompt: str) -> str:
        question = prompts.extract_section(prompt, "QUESTION") or ""
        files = prompts.extract_section(prompt, "FILES") or ""
        question_tokens = _content_tokens(question)
        scored: list[tuple[int, str]] = []
        for line in files.splitlines():
            if "::" not in line:
                continue
            doc_id, _, blurb = line.partition("::")
            doc_id = doc_id.strip()
            overlap = len(question_tokens & set(analyze(doc_id + " " + blurb)))
            if doc_id and overlap > 0:
                scored.append((overlap, doc_id))
        ranked = sorted(scored, key=lambda t: (-t[0], t[1]))
        return json.dumps({"selected_files": [doc_id for _, doc_id in ranked[:3]]})

    def _query_rewrite(self, prompt: str) -> str:
        question = prompts.extract_section(prompt, "QUESTION") or ""
        return _collapse_ws(question)

    def _final_answer(self, prompt: str) -> str:
        question = prompts.extract_section(prompt, "QUESTION") or ""
        context = prompts.extract_section(prompt, "CONTEXT") or ""
        # Drop the [chunk_id] lines, metadata header lines, and markdown
        # headings; answer from the prose itself.
        prose = "\n".join(
            ln
            for ln in context.splitlines()
            if not re.fullmatch(r"\[[^\]]+\]", ln.strip())
            and not re.match(r"^(Clusters|Entities|Questions|Insights):", ln)
            and not re.match(r"^#{1,6} ", ln)
        )
        sentences = _sentences(prose)
        if not sentences:
            return "The context does not contain enough information to answer."
        question_tokens = _content_tokens(question)
        scored = [
            (len(question_tokens & _content_tokens(s)), i) for i, s in enumerate(sentences)
        ]
        best = sorted(scored, key=lambda t: (-t[0], t[1]))[:2]
        picked = [sentences[i] for _, i in sorted(best, key=lambda t: t[1])]
        if all(score == 0 for score, _ in best):
            picked = [sentences[0]]
        return " ".join(picked)

    def _claim_extraction(self, prompt: str) -> str:
        text = prompts.extract_section(prompt, "TEXT") or ""
        claims: list[str] = []
        for sentence in _sentences(_collapse_ws(text)):
            lowered = sentence.casefold()
            for marker in _DISCOURSE_MARKERS:
                if lowered.startswith(marker + ",") or lowered.startswith(marker + " "):
                    sentence = sentence[len(marker):].lstrip(", ").strip()
                    break
            if len(sentence) > 1:
                claims.append(sentence)
        if not claims and text.strip():
            claims = [_collapse_ws(text)]
        return json.dumps({"claims": claims})

    def _entailment(self, prompt: str) -> str:
        premise = prompts.extract_section(prompt, "PREMISE") or ""
        claim = prompts.extract_section(prompt, "CLAIM") or ""
        premise_tokens = set(analyze(premise))
        verdict = "yes" if _content_tokens(claim) <= premise_tokens else "no"
        return json.dumps({"verdict": verdict})


class OpenAIProvider:
    """Chat, embeddings, and rerank over OpenAI-compatible HTTP endpoints.

    Rerank follows the Cohere-style ``/rerank`` request shape, which several
    OpenAI-compatible gateways also expose.
    """

    embed_batch_size = 128
    deterministic_latency = False

    def __init__(self, config: ProviderConfig, session: requests.Session | None = None) -> None:
        if not config.base_url:
            raise ProviderConfigError("openai provider requires base_url")
        self._base = config.base_url.rstrip("/")
        self._timeout = config.timeout_s
        self._session = session or requests.Session()
        api_key = os.environ.get(config.api_key_env, "")
        self._headers = {"Content-Type": "application/json"}
        if api_key:
            self._headers["Authorization"] = f"Bearer {api_key}"

    def _post(self, path: str, payload: dict[str, Any]) -> dict[str, Any]:
        url = f"{self._base}{path}"
        try:
            response = self._session.post(
                url, json=payload, headers=self._headers, timeout=self._timeout
            )
        except requests.RequestException as exc:
            raise TransportError(f"request to {url} failed: {exc}") from exc
        if response.status_code != 200:
            raise TransportError(f"{url} returned HTTP {response.status_code}")
        try:
            body = response.json()
        except ValueError as exc:
            raise TransportError(f"{url} returned non-JSON body") from exc
        if not isinstance(body, dict):
            raise TransportError(f"{url} returned unexpected body type")
        return body

    def complete(self, model: str, system_prompt: str, user_prompt: str) -> str:
        body = self._post(
            "/chat/completions",
            {
                "model": model,
                "temperature": 0,
                "messages": [
                    {"role": "system", "content": system_prompt},
                    {"role": "user", "content": user_prompt},
                ],
            },
        )
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError("chat response missing choices[0].message.content") from exc
        if not isinstance(content, str):
            raise TransportError("chat response content is not a string")
        return content

    def embed(self, model: str, texts: Sequence[str]) -> list[list[float]]:
        body = self._post("/embeddings", {"model": model, "input": list(texts)})
        data = body.get("data")
        if not isinstance(data, list) or len(data) != len(texts):
            raise TransportError("embeddings response has wrong row count")
        try:
            rows = sorted(data, key=lambda d: d["index"])
            return [[float(x) for x in row["embedding"]] for row in rows]
        except (KeyError, TypeError, ValueError) as exc:
            raise TransportError("embeddings response rows are malformed") from exc

    def rerank(
        self, model: str, query: str, documents: Sequence[str], top_n: int
    ) -> list[tuple[int, float]]:
        body = self._post(
            "/rerank",
            {"model": model, "query": query, "documents": list(documents), "top_n": top_n},
        )
        results = body.get("results")
        if not isinstance(results, list):
            raise TransportError("rerank response missing results")
        try:
            return [(int(r["index"]), float(r["relevance_score"])) for r in results]
        except (KeyError, TypeError, ValueError) as exc:
            raise TransportError("rerank response rows are malformed") from exc


def _strip_code_fences(text: str) -> str:
    stripped = text.strip()
    match = re.match(r"^```[A-Za-z0-9_-]*\n(.*?)\n?```$", stripped, re.DOTALL)
    return match.group(1) if match else stripped


def parse_structured(raw: str, schema: Mapping[str, FieldSpec]) -> dict[str, Any]:
    """Parse and validate a JSON object reply against a field schema.

    Raises ``ValueError`` with a message precise enough to drive the repair
    prompt (missing key, wrong type, list-length bounds).
    """
    try:
        obj = json.loads(_strip_code_fences(raw))
    except json.JSONDecodeError as exc:
        raise ValueError(f"reply is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ValueError("reply must be a JSON object")
    out: dict[str, Any] = {}
    for key, spec in schema.items():
        if key not in obj:
            raise ValueError(f"missing required key {key!r}")
        value = obj[key]
        if spec.kind == "string":
            if not isinstance(value, str) or not value.strip():
                raise ValueError(f"key {key!r} must be a non-empty string")
            out[key] = value.strip()
        elif spec.kind == "string_list":
            if not isinstance(value, list) or any(not isinstance(v, str) for v in value):
                raise ValueError(f"key {key!r} must be a list of strings")
            items = [v.strip() for v in value if v.strip()]
            if spec.min_items is not None and len(items) < spec.min_items:
                raise ValueError(
                    f"key {key!r} needs at least {spec.min_items} items, got {len(items)}"
                )
            if spec.max_items is not None and len(items) > spec.max_items:
                raise ValueError(
                    f"key {key!r} allows at most {spec.max_items} items, got {len(items)}"
                )
            out[key] = items
        else:
            raise ValueError(f"unknown field kind {spec.kind!r}")
    return out


class LlmGateway:
    """Single entry point for chat, embeddings, and rerank calls.

    Concurrency is bounded by a semaphore sized ``max_parallel``; transient
    transport failures are retried with exponential backoff; every successful
    call is appended to ``call_log`` and credited to any active latency span.
    """

    def __init__(self, config: ProviderConfig, provider: Provider | None = None) -> None:
        self.config = config
        if provider is not None:
            self.provider = provider
        elif config.kind == "mock":
            self.provider = MockProvider()
        else:
            self.provider = OpenAIProvider(config)
        self._semaphore = threading.BoundedSemaphore(config.max_parallel)
        self._lock = threading.Lock()
        self.call_log: list[CallRecord] = []
        # Spans are credited per opening thread, so concurrent answer runs
        # never see each other's call time.
        self._active_spans: dict[int, list[LatencySpan]] = {}

    @contextmanager
    def span(self) -> Iterator[LatencySpan]:
        """Collect the gateway seconds this thread spends while the span is open."""
        span = LatencySpan()
        thread_id = threading.get_ident()
        with self._lock:
            self._active_spans.setdefault(thread_id, []).append(span)
        try:
            yield span
        finally:
            with self._lock:
                self._active_spans[thread_id].remove(span)
                if not self._active_spans[thread_id]:
                    del self._active_spans[thread_id]

    def _model_for(self, role: str) -> str:
        model = self.config.model_names.get(role)
        if not model:
            raise ProviderConfigError(f"no model configured for role {role!r}")
        return model

    def _record(self, role: str, op: str, seconds: float, attempts: int) -> None:
        with self._lock:
            self.call_log.append(CallRecord(role, op, seconds, attempts))
            for span in self._active_spans.get(threading.get_ident(), ()):
                span._add(seconds)

    def _call(self, role: str, op: str, fn: Callable[[], Any]) -> Any:
        attempts = 0
        last_error: TransportError | None = None
        while attempts < self.config.retry_attempts:
            attempts += 1
            started = time.perf_counter()
            try:
                with self._semaphore:
                    result = fn()
            except TransportError as exc:
                last_error = exc
                if attempts < self.config.retry_attempts:
                    time.sleep(self.config.retry_backoff_s * (2 ** (attempts - 1)))
                continue
            seconds = 0.0 if self.provider.deterministic_latency else time.perf_counter() - started
            self._record(role, op, seconds, attempts)
            return result
        raise TransportError(
            f"{op} call for role {role!r} failed after {attempts} attempts: {last_error}"
        )

    def chat(self, role: str, system_prompt: str, user_prompt: str) -> str:
        if not user_prompt:
            raise ValueError("user_prompt must be non-empty")
        model = self._model_for(role)
        reply = self._call(
            role, "chat", lambda: self.provider.complete(model, system_prompt, user_prompt)
        )
        if not isinstance(reply, str):
            raise TransportError(f"provider returned non-text chat reply for role {role!r}")
        return reply

    def chat_structured(
        self,
        role: str,
        system_prompt: str,
        user_prompt: str,
        schema: Mapping[str, FieldSpec],
    ) -> dict[str, Any]:
        """Chat expecting a JSON object; one repair round on validation failure."""
        raw = self.chat(role, system_prompt, user_prompt)
        try:
            return parse_structured(raw, schema)
        except ValueError as first_error:
            repair_prompt = (
                f"{user_prompt}\n\n"
                f"Your previous reply was rejected: {first_error}\n"
                "Reply again with a single valid JSON object and nothing else."
            )
            raw = self.chat(role, system_prompt, repair_prompt)
            try:
                return parse_structured(raw, schema)
            except ValueError as second_error:
                raise StructuredOutputError(
                    f"role {role!r} produced invalid structured output after repair: "
                    f"{second_error}"
                ) from second_error

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        """Embed texts in provider-sized batches, preserving input order."""
        if not texts:
            raise ValueError("texts must be non-empty")
        if any(not t for t in texts):
            raise ValueError("every text to embed must be non-empty")
        model = self._model_for("embedder")
        batch_size = max(1, int(getattr(self.provider, "embed_batch_size", 128)))
        vectors: list[np.ndarray] = []
        for start in range(0, len(texts), batch_size):
            batch = list(texts[start : start + batch_size])
            rows = self._call("embedder", "embed", lambda b=batch: self.provider.embed(model, b))
            if len(rows) != len(batch):
                raise TransportError(
                    f"embedding batch returned {len(rows)} rows for {len(batch)} texts"
                )
            vectors.extend(np.asarray(row, dtype=np.float64) for row in rows)
        dims = {v.size for v in vectors}
        if len(dims) != 1:
            raise TransportError(f"inconsistent embedding dimensions: {sorted(dims)}")
        return vectors

    def rerank(self, query: str, texts: Sequence[str], top_n: int) -> list[tuple[int, float]]:
        if not query:
            raise ValueError("query must be non-empty")
        if not texts:
            raise ValueError("texts must be non-empty")
        if not 1 <= top_n <= len(texts):
            raise ValueError(f"top_n must be in [1, {len(texts)}], got {top_n}")
        model = self._model_for("reranker")
        result = self._call(
            "reranker", "rerank", lambda: self.provider.rerank(model, query, list(texts), top_n)
        )
        indices = [i for i, _ in result]
        if len(result) != top_n or len(set(indices)) != len(indices):
            raise TransportError("rerank returned wrong result count or duplicate indices")
        if any(not 0 <= i < len(texts) for i in indices):
            raise TransportError("rerank returned an out-of-range index")
        return [(int(i), float(s)) for i, s in result]
