import json

import pytest

from support import (
    build_synthetic_suite,
    corpus_entries,
    derivation_records,
    make_mixed_corpus,
    write_jsonl,
)
from tabgls.cli import EXIT_BACKEND, EXIT_DATA, EXIT_OK, EXIT_USAGE, RunConfig, main
from tabgls.errors import ConfigurationError


def _write_corpus(tmp_path, n=10, seed=50):
    pairs = make_mixed_corpus(n, seed=seed)
    entries = corpus_entries(pairs)
    path = tmp_path / "corpus.jsonl"
    write_jsonl(
        path,
        [
            {
                "table": {"format": e.table.format, "text": e.table.text},
                "image": e.image_ref,
                "base_query": e.base_query,
                "source": e.source,
            }
            for e in entries
        ],
    )
    return path


class TestRunConfig:
    def test_toml_plus_flag_overrides(self, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text('backend = "oracle"\nmode = "cot"\nconcurrency = 2\n')
        config = RunConfig.load(str(cfg), mode="direct")
        assert config.backend == "oracle"
        assert config.mode == "direct"  # flag wins
        assert config.concurrency == 2

    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text('modee = "gls"\n')
        with pytest.raises(ConfigurationError, match="unknown config keys"):
            RunConfig.load(str(cfg))

    def test_bad_mode_rejected(self):
        with pytest.raises(ConfigurationError):
            RunConfig(mode="fancy")


class TestDatagenCommand:
    def test_happy_path_prints_per_kind_counts(self, tmp_path, capsys):
        corpus = _write_corpus(tmp_path, n=9)
        out = tmp_path / "data.jsonl"
        code = main(["datagen", "--corpus", str(corpus), "--out", str(out), "--seed", "3"])
        assert code == EXIT_OK
        printed = capsys.readouterr().out
        assert "structure: 9" in printed
        assert "content_global: 9" in printed
        assert "content_local: 9" in printed
        assert len(out.read_text().splitlines()) == 27
        manifest = json.loads((tmp_path / "data.jsonl.manifest.json").read_text())
        assert manifest["total_instances"] == 27

    def test_missing_seed_is_usage_error(self, tmp_path):
        corpus = _write_corpus(tmp_path, n=2)
        code = main(["datagen", "--corpus", str(corpus), "--out", str(tmp_path / "d.jsonl")])
        assert code == EXIT_USAGE

    def test_corrupt_line_skipped_and_counted(self, tmp_path, capsys):
        corpus = _write_corpus(tmp_path, n=30)
        with corpus.open("a") as fh:
            fh.write("{corrupt\n")
        out = tmp_path / "data.jsonl"
        code = main(
            ["datagen", "--corpus", str(corpus), "--out", str(out), "--seed", "1",
             "--skip-threshold", "0.1"]
        )
        assert code == EXIT_OK
        assert "skipped: 1" in capsys.readouterr().out

    def test_threshold_exceeded_is_data_error(self, tmp_path):
        corpus = _write_corpus(tmp_path, n=5)
        with corpus.open("a") as fh:
            fh.write("{corrupt\n")
        code = main(
            ["datagen", "--corpus", str(corpus), "--out", str(tmp_path / "d.jsonl"), "--seed", "1"]
        )
        assert code == EXIT_DATA

    def test_determinism_across_invocations(self, tmp_path):
        corpus = _write_corpus(tmp_path, n=12)
        out1, out2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        assert main(["datagen", "--corpus", str(corpus), "--out", str(out1), "--seed", "7"]) == 0
        assert main(["datagen", "--corpus", str(corpus), "--out", str(out2), "--seed", "7"]) == 0
        assert out1.read_bytes() == out2.read_bytes()


class TestInferCommand:
    @pytest.fixture()
    def suite(self, tmp_path):
        eval_records, gold_records, derivations = build_synthetic_suite(
            tmp_path / "img", n=50, seed=5
        )
        dataset = tmp_path / "eval.jsonl"
        golds = tmp_path / "golds.jsonl"
        deriv = tmp_path / "derivations.jsonl"
        write_jsonl(dataset, eval_records)
        write_jsonl(golds, gold_records)
        write_jsonl(deriv, derivation_records(derivations))
        return dataset, golds, deriv

    def test_oracle_infer_50_predictions_zero_failures(self, tmp_path, suite, capsys):
        dataset, _, deriv = suite
        out = tmp_path / "preds.jsonl"
        code = main(
            ["infer", "--dataset", str(dataset), "--out", str(out), "--backend", "oracle",
             "--golds", str(deriv), "--mode", "gls"]
        )
        assert code == EXIT_OK
        records = [json.loads(l) for l in out.read_text().splitlines()]
        assert len(records) == 50
        assert not any(r["failed"] for r in records)
        assert all(len(r["transcripts"]) == 3 for r in records)
        # Predictions come out in input order despite concurrent execution.
        assert [r["id"] for r in records] == [f"q{i:03d}" for i in range(50)]

    def test_malformed_dataset_record_is_data_error(self, tmp_path):
        dataset = tmp_path / "eval.jsonl"
        write_jsonl(dataset, [{"id": "q1", "image": None, "task": "tqa"}])  # no question
        code = main(["infer", "--dataset", str(dataset), "--out", str(tmp_path / "p.jsonl"),
                     "--backend", "oracle", "--golds", str(dataset)])
        assert code == EXIT_DATA

    def test_bad_placeholder_is_usage_error(self, tmp_path):
        corpus = _write_corpus(tmp_path, n=2)
        code = main(["datagen", "--corpus", str(corpus), "--out", str(tmp_path / "d.jsonl"),
                     "--seed", "1", "--placeholder", "bad|token"])
        assert code == EXIT_USAGE

    def test_direct_mode_one_call_per_example(self, tmp_path, suite):
        dataset, _, deriv = suite
        out = tmp_path / "preds.jsonl"
        code = main(
            ["infer", "--dataset", str(dataset), "--out", str(out), "--backend", "oracle",
             "--golds", str(deriv), "--mode", "direct"]
        )
        assert code == EXIT_OK
        records = [json.loads(l) for l in out.read_text().splitlines()]
        assert all(len(r["transcripts"]) == 1 for r in records)

    def test_resume_via_cache_is_byte_identical(self, tmp_path, suite):
        dataset, _, deriv = suite
        cache = tmp_path / "cache"
        out1, out2 = tmp_path / "p1.jsonl", tmp_path / "p2.jsonl"
        args = ["infer", "--dataset", str(dataset), "--backend", "oracle", "--golds", str(deriv),
                "--mode", "gls", "--cache-dir", str(cache)]
        assert main(args + ["--out", str(out1)]) == EXIT_OK
        assert main(args + ["--out", str(out2)]) == EXIT_OK
        assert out1.read_bytes() == out2.read_bytes()
        assert any(cache.iterdir())

    def test_scripted_backend_from_file(self, tmp_path):
        dataset = tmp_path / "eval.jsonl"
        write_jsonl(dataset, [{"id": "q1", "image": None, "question": "Capital?", "task": "tqa"}])
        scripted = tmp_path / "responses.jsonl"
        write_jsonl(
            scripted,
            [{"text": '{"answer": "Paris"}', "usage": {"prompt_tokens": 5, "completion_tokens": 9}}],
        )
        out = tmp_path / "preds.jsonl"
        code = main(
            ["infer", "--dataset", str(dataset), "--out", str(out), "--backend", "scripted",
             "--scripted", str(scripted), "--mode", "direct"]
        )
        assert code == EXIT_OK
        record = json.loads(out.read_text())
        assert record["answer"] == "Paris"
        assert record["usage"] == {"prompt_tokens": 5, "completion_tokens": 9}

    def test_failures_recorded_not_fatal(self, tmp_path):
        dataset = tmp_path / "eval.jsonl"
        write_jsonl(
            dataset,
            [
                {"id": "q1", "image": None, "question": "first?", "task": "tqa"},
                {"id": "q2", "image": None, "question": "second?", "task": "tqa"},
            ],
        )
        scripted = tmp_path / "responses.jsonl"
        write_jsonl(
            scripted,
            [{"text": "garbage"}, {"text": "garbage"}, {"text": "garbage"},
             {"text": '{"answer": "ok"}'}],
        )
        out = tmp_path / "preds.jsonl"
        code = main(
            ["infer", "--dataset", str(dataset), "--out", str(out), "--backend", "scripted",
             "--scripted", str(scripted), "--mode", "direct", "--concurrency", "1"]
        )
        assert code == EXIT_OK
        records = [json.loads(l) for l in out.read_text().splitlines()]
        assert records[0]["failed"] and not records[1]["failed"]
        assert records[0]["answer"] == "" and "error" in records[0]

    def test_remote_without_endpoint_is_config_error(self, tmp_path, suite):
        dataset, _, _ = suite
        code = main(["infer", "--dataset", str(dataset), "--out", str(tmp_path / "p.jsonl"),
                     "--backend", "remote"])
        assert code == EXIT_USAGE

    def test_scripted_queue_exhaustion_is_backend_error(self, tmp_path):
        dataset = tmp_path / "eval.jsonl"
        write_jsonl(dataset, [{"id": "q1", "image": None, "question": "one?", "task": "tqa"}])
        scripted = tmp_path / "responses.jsonl"
        scripted.write_text("")  # empty queue
        # Queue exhaustion surfaces per-example as a failed record, except when
        # even the first call cannot be served: BackendError is not a stage
        # parse failure, so it aborts the run.
        code = main(
            ["infer", "--dataset", str(dataset), "--out", str(tmp_path / "p.jsonl"),
             "--backend", "scripted", "--scripted", str(scripted), "--mode", "direct"]
        )
        assert code == EXIT_BACKEND


class TestEvalCommand:
    def _run_oracle(self, tmp_path, mode="gls"):
        eval_records, gold_records, derivations = build_synthetic_suite(
            tmp_path / "img", n=10, seed=6
        )
        dataset, golds, deriv = (
            tmp_path / "eval.jsonl", tmp_path / "golds.jsonl", tmp_path / "deriv.jsonl",
        )
        write_jsonl(dataset, eval_records)
        write_jsonl(golds, gold_records)
        write_jsonl(deriv, derivation_records(derivations))
        preds = tmp_path / "preds.jsonl"
        assert main(["infer", "--dataset", str(dataset), "--out", str(preds),
                     "--backend", "oracle", "--golds", str(deriv), "--mode", mode]) == EXIT_OK
        return preds, golds

    def test_oracle_predictions_score_one(self, tmp_path, capsys):
        preds, golds = self._run_oracle(tmp_path)
        report_base = tmp_path / "report"
        code = main(["eval", "--preds", str(preds), "--golds", str(golds),
                     "--out", str(report_base)])
        assert code == EXIT_OK
        doc = json.loads((tmp_path / "report.json").read_text())
        assert doc["overall"] == 1.0
        assert (tmp_path / "report.txt").exists()

    def test_reconciliation_failure_exit_code(self, tmp_path):
        preds, golds = self._run_oracle(tmp_path)
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        code = main(["eval", "--preds", str(empty), "--golds", str(golds),
                     "--out", str(tmp_path / "r")])
        assert code == EXIT_DATA

    def test_eval_rerun_byte_identical(self, tmp_path):
        preds, golds = self._run_oracle(tmp_path)
        for base in ("r1", "r2"):
            assert main(["eval", "--preds", str(preds), "--golds", str(golds),
                         "--out", str(tmp_path / base)]) == EXIT_OK
        assert (tmp_path / "r1.json").read_bytes() == (tmp_path / "r2.json").read_bytes()
        assert (tmp_path / "r1.txt").read_bytes() == (tmp_path / "r2.txt").read_bytes()

    def test_report_command_renders_stored_json(self, tmp_path, capsys):
        preds, golds = self._run_oracle(tmp_path)
        assert main(["eval", "--preds", str(preds), "--golds", str(golds),
                     "--out", str(tmp_path / "report")]) == EXIT_OK
        capsys.readouterr()
        code = main(["report", "--report", str(tmp_path / "report.json")])
        assert code == EXIT_OK
        printed = capsys.readouterr().out
        assert "tqa" in printed and "overall" in printed


class TestExitCodes:
    def test_unknown_subcommand(self):
        assert main(["frobnicate"]) == EXIT_USAGE

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == EXIT_OK
        assert "datagen" in capsys.readouterr().out

    def test_missing_file_is_usage_error(self, tmp_path):
        code = main(["datagen", "--corpus", str(tmp_path / "missing.jsonl"),
                     "--out", str(tmp_path / "o.jsonl"), "--seed", "1"])
        assert code == EXIT_USAGE
