"""Tests for the command-line stages run in sequence."""

import json

import pytest

from src.artifacts import read_manifest
from src.cli import HANDLERS, build_parser, main

CONFIG = """\
paths:
  corpus_dir: data
  mock_table: data/mock_llm.jsonl
  cache: cache/verdicts.jsonl
  out_dir: out
embedder:
  kind: external
  dim: 16
  path: data/embeddings.jsonl
filter:
  strategy: mock
gsi:
  r: 0.3
  hidden_dim: 8
  epochs: 3
  patience: 3
  learning_rate: 0.01
experiment:
  seeds: [0, 1]
synth:
  n_users: 60
  dim: 16
  followees_per_user: [1, 3]
  tweets_per_user: [1, 3]
"""


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "run.yaml").write_text(CONFIG)
    return tmp_path


def run(capsys, *argv) -> tuple[int, dict]:
    code = main(list(argv))
    lines = capsys.readouterr().out.strip().splitlines()
    return code, json.loads(lines[-1])


class TestParser:
    """Tests for argument parsing."""

    def test_flags(self):
        """Test every stage flag parses."""
        args = build_parser().parse_args(["rank", "--seed", "3", "--r", "0.4", "--variant", "no_llm_fu", "--strategy", "cosine"])
        assert (args.command, args.seed, args.r, args.variant, args.strategy) == ("rank", 3, 0.4, "no_llm_fu", "cosine")

    def test_unknown_command(self):
        """Test an unknown stage exits with a usage error."""
        with pytest.raises(SystemExit):
            build_parser().parse_args(["deploy"])


class TestStages:
    """Tests for the stage sequence on a small synthetic corpus."""

    def test_full_sequence(self, workdir, capsys):
        """Test synth, ingest, filter, rank, train and eval each write their artifacts."""
        config = str(workdir / "run.yaml")
        out = workdir / "out"

        code, summary = run(capsys, "synth", "--config", config)
        assert code == 0 and summary["users"] == 60
        assert (workdir / "data" / "planted.json").exists()

        code, summary = run(capsys, "ingest", "--config", config)
        assert code == 0
        assert set(summary["splits"]) == {"0", "1"}
        assert (out / "split-biden-seed0.jsonl").exists()

        code, summary = run(capsys, "filter", "--config", config)
        assert code == 0 and summary["strategy"] == "mock"
        assert 0 < summary["retained"] <= summary["scored"]
        assert (workdir / "cache" / "verdicts.jsonl").exists()

        code, summary = run(capsys, "rank", "--config", config, "--seed", "0")
        assert code == 0
        ranking = json.loads((out / "ranking-biden-seed0.json").read_text())
        assert sorted(ranking["order"]) == list(range(16))
        assert ranking["computed_on"] == "biden/seed-0/train"

        code, summary = run(capsys, "train", "--config", config, "--seed", "0")
        assert code == 0
        assert (out / "model-biden-seed0.pt").exists()
        assert len((out / "model-biden-seed0.log.jsonl").read_text().splitlines()) == summary["epochs"]

        code, summary = run(capsys, "eval", "--config", config)
        assert code == 0
        report = json.loads((out / "report-in_target-full.json").read_text())
        assert report[0]["tag"] == "MRFG"
        assert summary["results"][0]["f_avg"] == report[0]["mean_percent"]["f_avg"]

        manifest = read_manifest(out / "ranking-biden-seed0.json")
        assert manifest.command == "rank" and manifest.seed == 0
        assert manifest.input_hashes

    def test_rank_rerun_identical(self, workdir, capsys):
        """Test rerunning rank rewrites byte-identical artifacts."""
        config = str(workdir / "run.yaml")
        for command in ("synth", "ingest", "filter"):
            assert run(capsys, command, "--config", config)[0] == 0
        ranking = workdir / "out" / "ranking-biden-seed0.json"

        run(capsys, "rank", "--config", config, "--seed", "0")
        first = ranking.read_bytes(), (workdir / "out" / "ranking-biden-seed0.json.manifest.json").read_bytes()
        run(capsys, "rank", "--config", config, "--seed", "0")
        second = ranking.read_bytes(), (workdir / "out" / "ranking-biden-seed0.json.manifest.json").read_bytes()
        assert first == second

    def test_filter_off(self, workdir, capsys):
        """Test the off strategy keeps everything and writes no relevance file."""
        config = str(workdir / "run.yaml")
        run(capsys, "synth", "--config", config)
        code, summary = run(capsys, "filter", "--config", config, "--strategy", "off")
        assert code == 0 and summary["retained"] == "all"
        assert not (workdir / "out" / "rft.jsonl").exists()

    def test_no_llm_fu_uses_unfiltered_graph(self, workdir, capsys):
        """Test the no_llm_fu variant ranks and trains on every followee tweet."""
        config = str(workdir / "run.yaml")
        for command in ("synth", "ingest", "filter"):
            run(capsys, command, "--config", config)
        out = workdir / "out"

        _, filtered = run(capsys, "rank", "--config", config, "--seed", "0")
        code, unfiltered = run(capsys, "rank", "--config", config, "--seed", "0", "--variant", "no_llm_fu")
        assert code == 0
        assert unfiltered["graph"]["users"] == filtered["graph"]["users"]
        assert unfiltered["graph"]["tweet_nodes"] > filtered["graph"]["tweet_nodes"]
        assert (out / "ranking-biden-seed0.json").exists()
        assert (out / "ranking-biden-seed0-no_llm_fu.json").exists()

        code, _ = run(capsys, "train", "--config", config, "--seed", "0", "--variant", "no_llm_fu")
        assert code == 0
        assert (out / "model-biden-seed0-no_llm_fu.pt").exists()
        assert not (out / "model-biden-seed0.pt").exists()

    def test_filter_eval_sweep_reruns_identical(self, workdir, capsys):
        """Test filter, eval and sweep rewrite byte-identical artifacts on rerun."""
        config = str(workdir / "run.yaml")
        out = workdir / "out"
        for command in ("synth", "ingest"):
            run(capsys, command, "--config", config)

        def snapshot(*paths):
            return {p.name: p.read_bytes() for p in paths}

        rft_files = (out / "rft.jsonl", out / "rft.jsonl.manifest.json", workdir / "cache" / "verdicts.jsonl")
        run(capsys, "filter", "--config", config)
        first = snapshot(*rft_files)
        run(capsys, "filter", "--config", config)
        assert snapshot(*rft_files) == first

        report = out / "report-in_target-full.json"
        run(capsys, "eval", "--config", config)
        first = snapshot(report, out / "report-in_target-full.json.manifest.json")
        run(capsys, "eval", "--config", config)
        assert snapshot(report, out / "report-in_target-full.json.manifest.json") == first

        sweep_files = (out / "sweep.json", out / "sweep.csv", out / "sweep.csv.manifest.json")
        assert run(capsys, "sweep", "--config", config)[0] == 0
        first = snapshot(*sweep_files)
        run(capsys, "sweep", "--config", config)
        assert snapshot(*sweep_files) == first


class TestErrors:
    """Tests for error reporting."""

    def test_missing_upstream_artifact(self, workdir, capsys):
        """Test training before ranking fails naming the missing stage."""
        config = str(workdir / "run.yaml")
        run(capsys, "synth", "--config", config)
        run(capsys, "filter", "--config", config)
        code, error = run(capsys, "train", "--config", config)
        assert code == 1
        assert error["error"] == "StageError"
        assert error["stage"] == "rank"

    def test_missing_corpus(self, workdir, capsys):
        """Test a stage without corpus files reports the ingest stage."""
        code, error = run(capsys, "ingest", "--config", str(workdir / "run.yaml"))
        assert code == 1
        assert error["stage"] == "ingest"

    def test_invalid_config(self, tmp_path, capsys):
        """Test schema violations exit with status 2."""
        (tmp_path / "bad.yaml").write_text("gsi:\n  r: 3\n")
        code, error = run(capsys, "rank", "--config", str(tmp_path / "bad.yaml"))
        assert code == 2
        assert error["error"] == "ValidationError"

    def test_missing_config(self, tmp_path, capsys):
        """Test a missing config file exits with status 2."""
        code, error = run(capsys, "rank", "--config", str(tmp_path / "absent.yaml"))
        assert code == 2
        assert error["error"] == "FileNotFoundError"

    def test_unparseable_config(self, tmp_path, capsys):
        """Test a config that is neither JSON nor YAML exits 2 with a JSON error line."""
        path = tmp_path / "broken.yaml"
        path.write_text("paths: [unclosed\n")
        code, error = run(capsys, "ingest", "--config", str(path))
        assert code == 2
        assert error["error"] == "ConfigError"
        assert error["path"] == str(path)

    def test_corrupt_relevance_output(self, workdir, capsys):
        """Test a damaged rft file fails the next stage naming the filter stage."""
        config = str(workdir / "run.yaml")
        run(capsys, "synth", "--config", config)
        run(capsys, "filter", "--config", config)
        rft = workdir / "out" / "rft.jsonl"
        rft.write_text(rft.read_text() + "{not json\n")
        code, error = run(capsys, "rank", "--config", config)
        assert code == 1
        assert error["error"] == "StageError"
        assert error["stage"] == "filter"

    def test_stale_split(self, workdir, capsys):
        """Test a split naming users absent from the corpus asks for ingest again."""
        config = str(workdir / "run.yaml")
        for command in ("synth", "ingest", "filter"):
            run(capsys, command, "--config", config)
        split = workdir / "out" / "split-biden-seed0.jsonl"
        split.write_text(json.dumps({"target": "biden", "seed": 0, "train": ["ghost"], "val": [], "test": []}) + "\n")
        code, error = run(capsys, "rank", "--config", config, "--seed", "0")
        assert code == 1
        assert error["stage"] == "ingest"

    def test_unexpected_failure_reported(self, workdir, capsys, monkeypatch):
        """Test an exception outside the pipeline hierarchy still ends with a JSON error line."""

        def explode(config, args):
            raise RuntimeError("disk on fire")

        monkeypatch.setitem(HANDLERS, "ingest", explode)
        code, error = run(capsys, "ingest", "--config", str(workdir / "run.yaml"))
        assert code == 1
        assert error == {"error": "RuntimeError", "message": "disk on fire"}
