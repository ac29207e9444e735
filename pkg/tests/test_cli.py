"""End-to-end command-line flows, run in process through cli.main()."""

from __future__ import annotations

import json

import pytest

from ragmeta import cli

CONFIGS_TOML = """\
[hybrid]
lambda = 0.5
candidate_pool = 6

[pipeline.1]
architecture = 2
k = 3

[pipeline.2]
architecture = 5
k = 3
collection = "ctx"
"""

DATASET_ROWS = [
    {
        "question_id": "c1",
        "question": "What was One Corp cash flow in 2023?",
        "ground_truth_answer": "Cash flow rose to 1.1 billion dollars.",
        "evidence_doc_ids": ["one"],
    },
    {
        "question_id": "c2",
        "question": "How many stores did Two Corp open in 2023?",
        "ground_truth_answer": "Two Corp opened 12 stores in 2023.",
        "evidence_doc_ids": ["two"],
    },
]


@pytest.fixture(scope="module")
def cli_env(tmp_path_factory):
    """A small corpus indexed through the CLI, plus dataset and config files."""
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus"
    corpus.mkdir()
    (corpus / "one.md").write_text(
        "# One Corp 2023\n\n## Cash\n\nCash flow rose to 1.1 billion dollars.\n"
        "Free cash funded the dividend.\n\n## Debt\n\nNet debt fell during 2023.\n",
        encoding="utf-8",
    )
    (corpus / "two.md").write_text(
        "# Two Corp 2023\n\n## Stores\n\nTwo Corp opened 12 stores in 2023.\n"
        "Comparable sales grew 4 percent.\n\n## Margin\n\nGross margin held at 38 percent.\n",
        encoding="utf-8",
    )
    index = root / "index"
    rc = cli.main(
        ["index", "--corpus", str(corpus), "--out", str(index),
         "--max-tokens", "40", "--overlap-tokens", "8"]
    )
    assert rc == 0
    dataset = root / "dataset.jsonl"
    dataset.write_text(
        "\n".join(json.dumps(r) for r in DATASET_ROWS) + "\n", encoding="utf-8"
    )
    configs = root / "configs.toml"
    configs.write_text(CONFIGS_TOML, encoding="utf-8")
    return {"root": root, "corpus": corpus, "index": index,
            "dataset": dataset, "configs": configs}


# -- index -------------------------------------------------------------------


def test_index_reports_counts(cli_env, tmp_path, capsys):
    rc = cli.main(
        ["index", "--corpus", str(cli_env["corpus"]), "--out", str(tmp_path / "idx"),
         "--max-tokens", "40", "--overlap-tokens", "8"]
    )
    out = capsys.readouterr().out
    assert rc == 0
    assert "indexed 2 documents" in out
    assert "embedding dim 64" in out
    assert "standard, contextual" in out
    for name in ("manifest.json", "chunks.jsonl", "vectors_std.f32",
                 "vectors_ctx.f32", "docmeta.json"):
        assert (tmp_path / "idx" / name).is_file()


def test_index_rejects_bad_chunking_flags(cli_env, tmp_path, capsys):
    rc = cli.main(
        ["index", "--corpus", str(cli_env["corpus"]), "--out", str(tmp_path / "idx"),
         "--max-tokens", "0"]
    )
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_index_missing_corpus_is_a_runtime_error(tmp_path, capsys):
    rc = cli.main(
        ["index", "--corpus", str(tmp_path / "nowhere"), "--out", str(tmp_path / "idx")]
    )
    assert rc == 1
    assert "error:" in capsys.readouterr().err


# -- ask ---------------------------------------------------------------------


def test_ask_answers_and_cites_sources(cli_env, capsys):
    rc = cli.main(
        ["ask", "--index", str(cli_env["index"]), "--arch", "2",
         "--query", "What was One Corp cash flow in 2023?", "--k", "2",
         "--candidates", "4"]
    )
    out = capsys.readouterr().out
    assert rc == 0
    assert "1.1 billion dollars" in out
    assert "sources: " in out


def test_ask_trace_prints_parseable_json(cli_env, capsys):
    rc = cli.main(
        ["ask", "--index", str(cli_env["index"]), "--arch", "6",
         "--query", "What was One Corp cash flow in 2023?", "--k", "3",
         "--candidates", "4", "--trace"]
    )
    out = capsys.readouterr().out
    assert rc == 0
    trace = json.loads(out[out.find("{"):])
    assert trace["original_query"] == "What was One Corp cash flow in 2023?"
    assert trace["selected_files"] is not None
    assert isinstance(trace["stage_latencies_s"], dict)
    assert trace["answer_text"]


def test_ask_collection_aliases(cli_env, capsys):
    for name in ("std", "ctx", "standard", "contextual"):
        rc = cli.main(
            ["ask", "--index", str(cli_env["index"]), "--arch", "1",
             "--query", "cash flow", "--k", "1", "--collection", name]
        )
        assert rc == 0
    rc = cli.main(
        ["ask", "--index", str(cli_env["index"]), "--arch", "1",
         "--query", "cash flow", "--collection", "fancy"]
    )
    assert rc == 2
    assert "unknown collection" in capsys.readouterr().err


def test_ask_usage_errors_exit_2(cli_env, capsys):
    # argparse rejects an out-of-range architecture
    assert cli.main(
        ["ask", "--index", str(cli_env["index"]), "--arch", "9", "--query", "q"]
    ) == 2
    # k larger than the candidate pool
    assert cli.main(
        ["ask", "--index", str(cli_env["index"]), "--arch", "3",
         "--query", "q", "--k", "9", "--candidates", "4"]
    ) == 2
    # architecture 5 is inseparable from the metadata reranker
    assert cli.main(
        ["ask", "--index", str(cli_env["index"]), "--arch", "5",
         "--query", "q", "--reranker", "none"]
    ) == 2
    # unknown flag
    assert cli.main(
        ["ask", "--index", str(cli_env["index"]), "--arch", "1",
         "--query", "q", "--frobnicate"]
    ) == 2
    capsys.readouterr()


def test_ask_missing_index_exits_1(tmp_path, capsys):
    rc = cli.main(
        ["ask", "--index", str(tmp_path / "no-index"), "--arch", "1", "--query", "q"]
    )
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_ask_openai_without_base_url_is_a_config_error(cli_env, capsys):
    rc = cli.main(
        ["ask", "--index", str(cli_env["index"]), "--arch", "1",
         "--query", "q", "--provider", "openai"]
    )
    assert rc == 2
    assert "base_url" in capsys.readouterr().err


# -- bench -------------------------------------------------------------------


def test_bench_writes_all_three_result_files(cli_env, tmp_path, capsys):
    out_dir = tmp_path / "results"
    rc = cli.main(
        ["bench", "--index", str(cli_env["index"]), "--dataset", str(cli_env["dataset"]),
         "--configs", str(cli_env["configs"]), "--out", str(out_dir)]
    )
    stdout = capsys.readouterr().out
    assert rc == 0
    assert stdout.startswith("config")
    report = json.loads((out_dir / "results.json").read_text(encoding="utf-8"))
    labels = [row["label"] for row in report["rows"]]
    assert labels == ["01-arch2-standard-none", "02-arch5-contextual-metadata"]
    csv_text = (out_dir / "results.csv").read_text(encoding="utf-8")
    assert csv_text.splitlines()[0].startswith("config,precision")
    table = (out_dir / "results.txt").read_text(encoding="utf-8")
    assert table.splitlines()[0].startswith("config")
    assert len(table.splitlines()) == 2 + len(labels)


def test_bench_runs_are_byte_identical(cli_env, tmp_path):
    outs = []
    for name in ("a", "b"):
        out_dir = tmp_path / name
        rc = cli.main(
            ["bench", "--index", str(cli_env["index"]), "--dataset", str(cli_env["dataset"]),
             "--configs", str(cli_env["configs"]), "--out", str(out_dir)]
        )
        assert rc == 0
        outs.append(out_dir)
    for name in ("results.json", "results.csv", "results.txt"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_bench_config_errors_exit_2(cli_env, tmp_path, capsys):
    rc = cli.main(
        ["bench", "--index", str(cli_env["index"]), "--dataset", str(cli_env["dataset"]),
         "--configs", str(tmp_path / "missing.toml"), "--out", str(tmp_path / "o")]
    )
    assert rc == 2

    empty = tmp_path / "empty.toml"
    empty.write_text("", encoding="utf-8")
    rc = cli.main(
        ["bench", "--index", str(cli_env["index"]), "--dataset", str(cli_env["dataset"]),
         "--configs", str(empty), "--out", str(tmp_path / "o")]
    )
    assert rc == 2
    assert "[pipeline.N]" in capsys.readouterr().err

    bad = tmp_path / "bad.toml"
    bad.write_text("[pipeline.1]\narchitecture = 3\nk = 99\n", encoding="utf-8")
    rc = cli.main(
        ["bench", "--index", str(cli_env["index"]), "--dataset", str(cli_env["dataset"]),
         "--configs", str(bad), "--out", str(tmp_path / "o")]
    )
    assert rc == 2
    assert "[pipeline.1]" in capsys.readouterr().err


def test_bench_missing_dataset_exits_1(cli_env, tmp_path, capsys):
    rc = cli.main(
        ["bench", "--index", str(cli_env["index"]), "--dataset", str(tmp_path / "no.jsonl"),
         "--configs", str(cli_env["configs"]), "--out", str(tmp_path / "o")]
    )
    assert rc == 1
    assert "error:" in capsys.readouterr().err
