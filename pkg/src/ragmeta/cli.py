"""Command-line entry points: ``index``, ``ask``, and ``bench``.

Configuration lives in TOML with three sections: ``[provider]`` for the LLM
backend, ``[hybrid]`` for fusion defaults, and ``[pipeline.N]`` tables for
benchmark rows. Environment variables override secrets only: ``LLM_API_KEY``
(or the name set by ``api_key_env``) and ``LLM_BASE_URL``.

Exit codes: 0 success, 2 usage or configuration error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib  # type: ignore[no-redef]

from ragmeta.chunking import ChunkingParams
from ragmeta.enrichment import build_index
from ragmeta.evaluation import load_dataset, run_benchmark
from ragmeta.gateway import GatewayError, LlmGateway, ProviderConfig, ROLES
from ragmeta.hybrid import HybridParams
from ragmeta.pipelines import PipelineConfig, answer_query
from ragmeta.storage import load_index

logger = logging.getLogger(__name__)

_COLLECTION_NAMES = {
    "std": "standard",
    "ctx": "contextual",
    "standard": "standard",
    "contextual": "contextual",
}


class UsageError(Exception):
    """Bad flags or configuration; maps to exit code 2."""


def _read_toml(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"config file {path} is not valid TOML: {exc}") from exc


def _provider_config(data: dict, kind_flag: str | None) -> ProviderConfig:
    section = data.get("provider", {})
    if not isinstance(section, dict):
        raise UsageError("[provider] must be a table")
    models = {role: "mock" for role in ROLES}
    models.update(section.get("models", {}))
    kind = kind_flag or section.get("kind", "mock")
    base_url = os.environ.get("LLM_BASE_URL") or section.get("base_url", "")
    try:
        return ProviderConfig(
            kind=kind,
            base_url=base_url,
            api_key_env=section.get("api_key_env", "LLM_API_KEY"),
            model_names=models,
            timeout_s=float(section.get("timeout_s", 30.0)),
            max_parallel=int(section.get("max_parallel", 4)),
            retry_attempts=int(section.get("retry_attempts", 3)),
            retry_backoff_s=float(section.get("retry_backoff_s", 0.5)),
        )
    except GatewayError as exc:
        raise UsageError(str(exc)) from exc


def _hybrid_defaults(data: dict) -> HybridParams:
    section = data.get("hybrid", {})
    try:
        return HybridParams(
            lambda_=float(section.get("lambda", 0.5)),
            candidate_pool=int(section.get("candidate_pool", 25)),
        )
    except ValueError as exc:
        raise UsageError(f"[hybrid]: {exc}") from exc


def _collection(name: str) -> str:
    try:
        return _COLLECTION_NAMES[name]
    except KeyError:
        raise UsageError(f"unknown collection {name!r} (use std or ctx)") from None


def _pipeline_configs(data: dict, hybrid: HybridParams) -> list[PipelineConfig]:
    section = data.get("pipeline", {})
    if not isinstance(section, dict) or not section:
        raise UsageError("config file needs at least one [pipeline.N] table")
    def sort_key(name: str) -> tuple:
        return (0, int(name)) if name.isdigit() else (1, name)
    configs = []
    for name in sorted(section, key=sort_key):
        entry = section[name]
        if not isinstance(entry, dict) or "architecture" not in entry:
            raise UsageError(f"[pipeline.{name}] needs an 'architecture' key")
        try:
            configs.append(
                PipelineConfig(
                    architecture=int(entry["architecture"]),
                    collection=_collection(str(entry.get("collection", "std"))),
                    k=int(entry.get("k", 7)),
                    candidate_pool=int(entry.get("candidate_pool", hybrid.candidate_pool)),
                    hybrid=HybridParams(
                        lambda_=float(entry.get("lambda", hybrid.lambda_)),
                        candidate_pool=int(entry.get("candidate_pool", hybrid.candidate_pool)),
                    ),
                    reranker=entry.get("reranker"),
                )
            )
        except ValueError as exc:
            raise UsageError(f"[pipeline.{name}]: {exc}") from exc
    return configs


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ragmeta",
        description="Metadata-driven hybrid retrieval over markdown document collections.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="enrich and index a corpus directory")
    p_index.add_argument("--corpus", required=True, help="directory of .md source files")
    p_index.add_argument("--out", required=True, help="index output directory")
    p_index.add_argument("--provider", choices=["mock", "openai"])
    p_index.add_argument("--config", help="TOML config file")
    p_index.add_argument("--max-tokens", type=int, default=1000)
    p_index.add_argument("--overlap-tokens", type=int, default=100)

    p_ask = sub.add_parser("ask", help="answer one question over an index")
    p_ask.add_argument("--index", required=True)
    p_ask.add_argument("--query", required=True)
    p_ask.add_argument("--arch", type=int, choices=range(1, 7), required=True)
    p_ask.add_argument("--collection", default="std", help="std or ctx")
    p_ask.add_argument("--k", type=int, default=7)
    p_ask.add_argument("--candidates", type=int, default=25)
    p_ask.add_argument("--lambda", dest="lambda_", type=float, default=0.5)
    p_ask.add_argument(
        "--reranker", choices=["auto", "none", "external", "metadata"], default="auto"
    )
    p_ask.add_argument("--trace", action="store_true", help="print the full answer trace as JSON")
    p_ask.add_argument("--provider", choices=["mock", "openai"])
    p_ask.add_argument("--config", help="TOML config file")

    p_bench = sub.add_parser("bench", help="run a benchmark matrix over a dataset")
    p_bench.add_argument("--index", required=True)
    p_bench.add_argument("--dataset", required=True, help="JSONL file of QA examples")
    p_bench.add_argument("--configs", required=True, help="TOML file with [pipeline.N] tables")
    p_bench.add_argument("--out", required=True, help="directory for result files")
    p_bench.add_argument("--provider", choices=["mock", "openai"])

    return parser


def _cmd_index(args: argparse.Namespace) -> int:
    data = _read_toml(args.config)
    gateway = LlmGateway(_provider_config(data, args.provider))
    try:
        chunking = ChunkingParams(max_tokens=args.max_tokens, overlap_tokens=args.overlap_tokens)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    manifest = build_index(args.corpus, args.out, gateway, chunking)
    print(f"indexed {manifest.doc_count} documents into {manifest.chunk_count} chunks")
    print(f"embedding dim {manifest.embedding_dim}; collections: {', '.join(manifest.collections)}")
    print(
        f"doc metadata failures: {len(manifest.doc_failures)}; "
        f"chunk metadata failures: {manifest.chunk_metadata_failures}"
    )
    print(f"index written to {args.out}")
    return 0


def _cmd_ask(args: argparse.Namespace) -> int:
    data = _read_toml(args.config)
    gateway = LlmGateway(_provider_config(data, args.provider))
    try:
        config = PipelineConfig(
            architecture=args.arch,
            collection=_collection(args.collection),
            k=args.k,
            candidate_pool=args.candidates,
            hybrid=HybridParams(lambda_=args.lambda_, candidate_pool=args.candidates),
            reranker=None if args.reranker == "auto" else args.reranker,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    index = load_index(args.index)
    trace = answer_query(args.query, config, index, gateway)
    print(trace.answer_text)
    sources = [sc.chunk_id for sc in trace.retrieved] + list(trace.expansion_added)
    if sources:
        print()
        print("sources: " + ", ".join(sources))
    for warning in trace.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    if args.trace:
        print(json.dumps(trace.to_dict(), indent=2, sort_keys=True))
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    data = _read_toml(args.configs)
    gateway = LlmGateway(_provider_config(data, args.provider))
    hybrid = _hybrid_defaults(data)
    configs = _pipeline_configs(data, hybrid)
    index = load_index(args.index)
    examples, errors = load_dataset(args.dataset)
    if errors:
        print(f"skipped {len(errors)} malformed dataset line(s)", file=sys.stderr)
    report = run_benchmark(gateway, index, examples, configs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.json").write_bytes(report.to_json_bytes())
    (out / "results.csv").write_text(report.to_csv(), encoding="utf-8", newline="")
    table = report.to_text_table()
    (out / "results.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    print(f"results written to {out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "index":
            return _cmd_index(args)
        if args.command == "ask":
            return _cmd_ask(args)
        return _cmd_bench(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (GatewayError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
