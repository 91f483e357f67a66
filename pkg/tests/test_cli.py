import hashlib
import json

import pytest
from click.testing import CliRunner

from docvae.cli import main

TINY_TRAIN_ARGS = [
    "--set", "model.hidden_dim=16",
    "--set", "model.latent_dim=8",
    "--set", "model.heads=2",
    "--set", "model.dropout=0.0",
    "--set", "train.epochs=2",
    "--set", "train.batch_size=16",
]


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory, runner):
    out = tmp_path_factory.mktemp("cli-dataset")
    result = runner.invoke(main, [
        "dataset", "gen", "--family", "crello-like", "--n", "40",
        "--feature-dim", "8", "--seed", "7", "--out", str(out),
    ])
    assert result.exit_code == 0, result.output
    return out


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory, runner, dataset_dir):
    out = tmp_path_factory.mktemp("cli-train")
    result = runner.invoke(main, [
        "train", "--data", str(dataset_dir / "manifest.json"), "--seed", "0",
        "--out", str(out), *TINY_TRAIN_ARGS,
    ])
    assert result.exit_code == 0, result.output
    return out


class TestDatasetGen:
    def test_writes_manifest_and_splits(self, dataset_dir):
        assert (dataset_dir / "manifest.json").exists()
        assert (dataset_dir / "schema.json").exists()
        for split in ("train", "val", "test"):
            assert (dataset_dir / f"{split}.jsonl").exists()

    def test_writes_resolved_config(self, dataset_dir):
        resolved = json.loads((dataset_dir / "resolved_config.json").read_text())
        assert resolved["command"] == "dataset gen"
        assert resolved["seed"] == 7

    def test_idempotent_given_seed(self, runner, dataset_dir, tmp_path):
        result = runner.invoke(main, [
            "dataset", "gen", "--family", "crello-like", "--n", "40",
            "--feature-dim", "8", "--seed", "7", "--out", str(tmp_path),
        ])
        assert result.exit_code == 0
        for split in ("train", "val", "test"):
            first = hashlib.sha256((dataset_dir / f"{split}.jsonl").read_bytes()).hexdigest()
            second = hashlib.sha256((tmp_path / f"{split}.jsonl").read_bytes()).hexdigest()
            assert first == second

    def test_unknown_override_rejected(self, runner, tmp_path):
        result = runner.invoke(main, [
            "dataset", "gen", "--out", str(tmp_path), "--set", "generator.sizes=3",
        ])
        assert result.exit_code == 2
        assert "unknown" in result.output

    def test_bad_config_rejected(self, runner, tmp_path):
        result = runner.invoke(main, [
            "dataset", "gen", "--n", "0", "--out", str(tmp_path),
        ])
        assert result.exit_code != 0


class TestTrain:
    def test_checkpoints_and_log(self, run_dir):
        assert (run_dir / "best.pt").exists()
        assert (run_dir / "last.pt").exists()
        assert (run_dir / "metrics.jsonl").exists()
        resolved = json.loads((run_dir / "resolved_config.json").read_text())
        assert resolved["model"]["hidden_dim"] == 16
        assert resolved["train"]["epochs"] == 2

    def test_unknown_model_key_rejected(self, runner, dataset_dir, tmp_path):
        result = runner.invoke(main, [
            "train", "--data", str(dataset_dir / "manifest.json"),
            "--out", str(tmp_path), "--set", "model.depth=3",
        ])
        assert result.exit_code == 2
        assert "unknown model keys" in result.output


class TestEval:
    def test_checkpoint_eval(self, runner, dataset_dir, run_dir, tmp_path):
        result = runner.invoke(main, [
            "eval", "--data", str(dataset_dir / "manifest.json"), "--split", "test",
            "--checkpoint", str(run_dir / "best.pt"), "--out", str(tmp_path),
        ])
        assert result.exit_code == 0, result.output
        report = json.loads((tmp_path / "report.json").read_text())
        assert {"s_reconst", "miou", "s_gen"} <= set(report)
        assert "S_reconst" in result.output

    def test_tsv_format(self, runner, dataset_dir, run_dir, tmp_path):
        result = runner.invoke(main, [
            "eval", "--data", str(dataset_dir / "manifest.json"), "--split", "test",
            "--checkpoint", str(run_dir / "best.pt"), "--out", str(tmp_path), "--format", "tsv",
        ])
        assert result.exit_code == 0
        lines = result.output.strip().splitlines()
        assert lines[0].split("\t") == ["model", "s_reconst", "miou", "s_gen"]

    def test_self_reconstruction_scores_hundred(self, runner, dataset_dir, tmp_path):
        result = runner.invoke(main, [
            "eval", "--data", str(dataset_dir / "manifest.json"), "--split", "test",
            "--reconstructions", str(dataset_dir / "test.jsonl"),
            "--out", str(tmp_path), "--format", "tsv",
        ])
        assert result.exit_code == 0, result.output
        row = result.output.strip().splitlines()[1].split("\t")
        assert row[1] == "100.0"
        assert row[2] == "100.0"
        assert row[3] == "100.0"

    def test_requires_exactly_one_source(self, runner, dataset_dir, run_dir, tmp_path):
        result = runner.invoke(main, [
            "eval", "--data", str(dataset_dir / "manifest.json"), "--out", str(tmp_path),
        ])
        assert result.exit_code == 2
        result = runner.invoke(main, [
            "eval", "--data", str(dataset_dir / "manifest.json"), "--out", str(tmp_path),
            "--checkpoint", str(run_dir / "best.pt"),
            "--reconstructions", str(dataset_dir / "test.jsonl"),
        ])
        assert result.exit_code == 2


class TestGenerate:
    def test_writes_documents(self, runner, run_dir, tmp_path):
        result = runner.invoke(main, [
            "generate", "--checkpoint", str(run_dir / "best.pt"), "--n", "5",
            "--seed", "3", "--out", str(tmp_path), "--render",
        ])
        assert result.exit_code == 0, result.output
        lines = (tmp_path / "generated.jsonl").read_text().splitlines()
        assert len(lines) == 5
        assert len(list(tmp_path.glob("*.colormap.svg"))) == 5

    def test_reproducible(self, runner, run_dir, tmp_path):
        for sub in ("a", "b"):
            result = runner.invoke(main, [
                "generate", "--checkpoint", str(run_dir / "best.pt"), "--n", "4",
                "--seed", "9", "--out", str(tmp_path / sub),
            ])
            assert result.exit_code == 0
        assert (tmp_path / "a" / "generated.jsonl").read_bytes() == (tmp_path / "b" / "generated.jsonl").read_bytes()


class TestInterpolateAndRender:
    def test_interpolate_strip(self, runner, dataset_dir, run_dir, tmp_path):
        result = runner.invoke(main, [
            "interpolate", "--checkpoint", str(run_dir / "best.pt"),
            "--data", str(dataset_dir / "manifest.json"), "--split", "test",
            "--index-a", "0", "--index-b", "1", "--steps", "5", "--out", str(tmp_path),
        ])
        assert result.exit_code == 0, result.output
        strips = list(tmp_path.glob("interpolation-*.svg"))
        assert len(strips) == 1
        assert len((tmp_path / "interpolation.jsonl").read_text().splitlines()) == 5

    def test_render_colormap(self, runner, dataset_dir, tmp_path):
        result = runner.invoke(main, [
            "render", "--data", str(dataset_dir / "manifest.json"), "--split", "train",
            "--index", "0", "--mode", "colormap", "--out", str(tmp_path),
        ])
        assert result.exit_code == 0, result.output
        assert list(tmp_path.glob("train-*.colormap.svg"))

    def test_render_textured(self, runner, dataset_dir, tmp_path):
        result = runner.invoke(main, [
            "render", "--data", str(dataset_dir / "manifest.json"), "--split", "train",
            "--index", "1", "--mode", "textured", "--out", str(tmp_path),
        ])
        assert result.exit_code == 0, result.output
        assert list(tmp_path.glob("train-*.textured.svg"))

    def test_bad_index_rejected(self, runner, dataset_dir, tmp_path):
        result = runner.invoke(main, [
            "render", "--data", str(dataset_dir / "manifest.json"), "--split", "train",
            "--index", "999", "--out", str(tmp_path),
        ])
        assert result.exit_code == 2


class TestGridSearch:
    def test_tiny_grid(self, runner, dataset_dir, tmp_path):
        result = runner.invoke(main, [
            "gridsearch", "--data", str(dataset_dir / "manifest.json"),
            "--grid", "2,64", "--seed", "0", "--out", str(tmp_path),
            *TINY_TRAIN_ARGS,
        ])
        assert result.exit_code == 0, result.output
        table = (tmp_path / "gridsearch.tsv").read_text().splitlines()
        assert len(table) == 3

    def test_bad_grid_rejected(self, runner, dataset_dir, tmp_path):
        result = runner.invoke(main, [
            "gridsearch", "--data", str(dataset_dir / "manifest.json"),
            "--grid", "2,abacus", "--out", str(tmp_path),
        ])
        assert result.exit_code == 2


class TestOutputRoot:
    def test_env_var_used_when_out_missing(self, runner, tmp_path, monkeypatch):
        monkeypatch.setenv("DOCVAE_OUTPUT_ROOT", str(tmp_path / "root"))
        result = runner.invoke(main, [
            "dataset", "gen", "--family", "rico-like", "--n", "10", "--seed", "1",
        ])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "root" / "dataset" / "manifest.json").exists()


class TestRuntimeErrors:
    def test_schema_mismatch_exits_one(self, runner, run_dir, tmp_path):
        result = runner.invoke(main, [
            "dataset", "gen", "--family", "rico-like", "--n", "12", "--seed", "2",
            "--out", str(tmp_path / "rico"),
        ])
        assert result.exit_code == 0
        result = runner.invoke(main, [
            "eval", "--data", str(tmp_path / "rico" / "manifest.json"), "--split", "test",
            "--checkpoint", str(run_dir / "best.pt"), "--out", str(tmp_path / "eval"),
        ])
        assert result.exit_code == 1
        assert "hash" in result.output
