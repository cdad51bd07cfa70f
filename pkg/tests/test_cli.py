import json

import pytest

from kbcomplete.cli import main
from kbcomplete.dataset import load_dataset

from conftest import FIXTURES, ScriptedHTTPServer, build_replay_cache, oracle_router_script

VALIDATION = str(FIXTURES / "validation_like.jsonl")
TRAIN = str(FIXTURES / "train_like.jsonl")
MINI_GOLD = str(FIXTURES / "mini_corpus_gold.jsonl")
MINI_PRED = str(FIXTURES / "mini_corpus_pred.jsonl")


@pytest.fixture
def replay_cache(tmp_path, validation_records):
    cache = tmp_path / "cache"
    build_replay_cache(cache, validation_records)
    return cache


class TestSplit:
    def test_documented_split_sizes(self, tmp_path):
        train_out = tmp_path / "train.jsonl"
        holdout_out = tmp_path / "holdout.jsonl"
        code = main([
            "split", "--input", TRAIN, "--ratio", "0.8", "--seed", "13",
            "--train-out", str(train_out), "--holdout-out", str(holdout_out),
        ])
        assert code == 0
        assert len(load_dataset(train_out)) == 302
        assert len(load_dataset(holdout_out)) == 75

    def test_same_seed_identical_files(self, tmp_path):
        outs = []
        for tag in ("a", "b"):
            train_out = tmp_path / f"train_{tag}.jsonl"
            holdout_out = tmp_path / f"holdout_{tag}.jsonl"
            assert main([
                "split", "--input", TRAIN, "--seed", "21",
                "--train-out", str(train_out), "--holdout-out", str(holdout_out),
            ]) == 0
            outs.append((train_out.read_bytes(), holdout_out.read_bytes()))
        assert outs[0] == outs[1]

    def test_bad_ratio_exits_2(self, tmp_path):
        code = main([
            "split", "--input", TRAIN, "--ratio", "1.5",
            "--train-out", str(tmp_path / "t"), "--holdout-out", str(tmp_path / "h"),
        ])
        assert code == 2

    def test_missing_input_exits_1(self, tmp_path):
        code = main([
            "split", "--input", str(tmp_path / "nope.jsonl"),
            "--train-out", str(tmp_path / "t"), "--holdout-out", str(tmp_path / "h"),
        ])
        assert code == 1


class TestRoute:
    def test_rule_routing_writes_template_ids(self, tmp_path):
        out = tmp_path / "routes.jsonl"
        assert main(["route", "--input", MINI_GOLD, "--output", str(out)]) == 0
        rows = [json.loads(l) for l in out.read_text().splitlines()]
        assert len(rows) == 12
        assert rows[0]["TemplateId"] == 1
        assert all(r["Status"] == "ok" for r in rows)

    def test_external_routing_against_fixture_server(self, tmp_path):
        out = tmp_path / "routes.jsonl"
        with ScriptedHTTPServer(oracle_router_script()) as server:
            code = main([
                "route", "--input", MINI_GOLD, "--output", str(out),
                "--router", f"external:{server.url}", "--parallelism", "4",
            ])
        assert code == 0
        rows = [json.loads(l) for l in out.read_text().splitlines()]
        assert [r["TemplateId"] for r in rows] == [1, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5, 5]

    def test_bad_router_spec_exits_2(self, tmp_path):
        assert main(["route", "--input", MINI_GOLD, "--output", str(tmp_path / "o"), "--router", "magic"]) == 2


class TestComplete:
    def test_replay_run_covers_every_row(self, tmp_path, replay_cache):
        out = tmp_path / "pred.jsonl"
        report_path = tmp_path / "report.json"
        code = main([
            "complete", "--input", VALIDATION, "--output", str(out),
            "--mode", "replay", "--cache-dir", str(replay_cache),
            "--report", str(report_path),
        ])
        assert code == 0
        assert len(load_dataset(out)) == 378
        report = json.loads(report_path.read_text())
        assert report["total"] == 378
        assert report["routing_errors"] == 0
        assert report["retrieval_errors"] == 0

    def test_replay_idempotent_across_parallelism(self, tmp_path, replay_cache):
        outputs = []
        for parallelism in ("1", "8"):
            out = tmp_path / f"pred_{parallelism}.jsonl"
            code = main([
                "complete", "--input", VALIDATION, "--output", str(out),
                "--mode", "replay", "--cache-dir", str(replay_cache),
                "--parallelism", parallelism, "--report", str(tmp_path / "r.json"),
            ])
            assert code == 0
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]

    def test_replay_with_empty_cache_fails(self, tmp_path):
        code = main([
            "complete", "--input", VALIDATION, "--output", str(tmp_path / "pred.jsonl"),
            "--mode", "replay", "--cache-dir", str(tmp_path / "empty"),
        ])
        assert code == 2

    def test_replay_without_cache_dir_fails(self, tmp_path):
        code = main([
            "complete", "--input", VALIDATION, "--output", str(tmp_path / "pred.jsonl"),
            "--mode", "replay",
        ])
        assert code == 2

    def test_unreachable_external_router_still_exits_0(self, tmp_path, replay_cache):
        out = tmp_path / "pred.jsonl"
        report_path = tmp_path / "report.json"
        code = main([
            "complete", "--input", VALIDATION, "--output", str(out),
            "--router", "external:http://127.0.0.1:9", "--mode", "replay",
            "--cache-dir", str(replay_cache), "--report", str(report_path),
        ])
        assert code == 0
        report = json.loads(report_path.read_text())
        assert report["routing_errors"] == report["total"] == 378


class TestEvaluate:
    def test_perfect_predictions(self, tmp_path, capsys):
        report_path = tmp_path / "scores.json"
        code = main(["evaluate", "--input", MINI_GOLD, "--gold", MINI_GOLD, "--report", str(report_path)])
        assert code == 0
        table = capsys.readouterr().out
        assert "Average" in table
        scores = json.loads(report_path.read_text())
        assert scores["overall"]["f1"] == 1.0
        assert scores["overall"]["precision"] == 1.0

    def test_mini_corpus_matches_hand_computed_values(self, tmp_path):
        report_path = tmp_path / "scores.json"
        code = main(["evaluate", "--input", MINI_PRED, "--gold", MINI_GOLD, "--report", str(report_path)])
        assert code == 0
        scores = json.loads(report_path.read_text())
        expected = json.loads((FIXTURES / "mini_corpus_expected.json").read_text())
        for relation, row in expected["per_relation"].items():
            for field in ("precision", "recall", "f1"):
                assert scores["per_relation"][relation][field] == pytest.approx(row[field], abs=1e-12)
            assert scores["per_relation"][relation]["count"] == row["count"]
        for field in ("precision", "recall", "f1"):
            assert scores["overall"][field] == pytest.approx(expected["overall"][field], abs=1e-12)
            assert scores["zero_object"][field] == pytest.approx(expected["zero_object"][field], abs=1e-12)
        assert scores["zero_object"]["count"] == 3

    def test_missing_prediction_exits_3(self, tmp_path, capsys):
        partial = tmp_path / "partial.jsonl"
        lines = (FIXTURES / "mini_corpus_pred.jsonl").read_text().splitlines()
        partial.write_text("\n".join(lines[:-1]) + "\n", encoding="utf-8")
        code = main(["evaluate", "--input", str(partial), "--gold", MINI_GOLD])
        assert code == 3
        assert "gold row without prediction" in capsys.readouterr().err

    def test_join_is_by_key_not_position(self, tmp_path):
        shuffled = tmp_path / "shuffled.jsonl"
        lines = (FIXTURES / "mini_corpus_pred.jsonl").read_text().splitlines()
        shuffled.write_text("\n".join(reversed(lines)) + "\n", encoding="utf-8")
        report_path = tmp_path / "scores.json"
        code = main(["evaluate", "--input", str(shuffled), "--gold", MINI_GOLD, "--report", str(report_path)])
        assert code == 0
        expected = json.loads((FIXTURES / "mini_corpus_expected.json").read_text())
        scores = json.loads(report_path.read_text())
        assert scores["overall"]["f1"] == pytest.approx(expected["overall"]["f1"], abs=1e-12)


class TestReport:
    def test_renders_saved_report(self, tmp_path, capsys):
        report_path = tmp_path / "scores.json"
        assert main(["evaluate", "--input", MINI_PRED, "--gold", MINI_GOLD, "--report", str(report_path)]) == 0
        capsys.readouterr()
        assert main(["report", "--input", str(report_path)]) == 0
        out = capsys.readouterr().out
        assert "Zero-object" in out
        assert "seriesHasNumberOfEpisodes" in out

    def test_malformed_report_exits_1(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{}", encoding="utf-8")
        assert main(["report", "--input", str(bad)]) == 1
