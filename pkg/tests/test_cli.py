"""Command-line front end: exit codes, config resolution, run.json closure."""

import csv
import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from stainaug.cli import dispatch


def run(argv):
    return dispatch([str(a) for a in argv])


def tree_hash(root):
    root = Path(root)
    digest = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        if path.name == "run.json":
            continue
        digest.update(str(path.relative_to(root)).encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()


@pytest.fixture(scope="module")
def tiny_data(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "tiles"
    code = run(["synth-data", "--domains", 2, "--n", 12, "--size", 32,
                "--seed", 0, "--out", out])
    assert code == 0
    return out


class TestExitCodes:
    def test_unknown_command(self, capsys):
        assert run(["transmogrify"]) == 2
        capsys.readouterr()

    def test_no_command(self, capsys):
        assert run([]) == 2
        capsys.readouterr()

    def test_missing_required_flag_named(self, capsys):
        assert run(["synth-data", "--n", 4]) == 2
        err = capsys.readouterr().err
        assert "--out" in err

    def test_help_exits_zero(self, capsys):
        for cmd in ("synth-data", "tile", "train-gan", "augment",
                    "batch-metrics", "train-classifier", "evaluate", "report"):
            assert run([cmd, "--help"]) == 0
            out = capsys.readouterr().out
            assert "--config" in out

    def test_version(self, capsys):
        assert run(["--version"]) == 0
        assert capsys.readouterr().out.strip() == "0.1.0"

    def test_runtime_error_exits_one(self, tmp_path, capsys):
        code = run(["batch-metrics", "--tiles", tmp_path / "absent",
                    "--out", tmp_path / "rep"])
        assert code == 1
        assert "error[dataset]" in capsys.readouterr().err

    def test_bad_choice_rejected(self, tmp_path, capsys):
        code = run(["batch-metrics", "--tiles", tmp_path, "--method", "tsne",
                    "--out", tmp_path])
        assert code == 2
        capsys.readouterr()


class TestSynthData:
    def test_outputs_and_run_record(self, tiny_data):
        files = list(tiny_data.rglob("*.png"))
        assert len(files) == 24
        assert (tiny_data / "manifest.csv").is_file()
        record = json.loads((tiny_data / "run.json").read_text())
        assert record["command"] == "synth-data"
        assert record["config"]["n"] == 12
        assert record["config"]["domains"] == 2
        assert record["seed"] == 0
        assert record["version"] == "0.1.0"

    def test_rerun_from_record_is_identical(self, tiny_data, tmp_path):
        record = json.loads((tiny_data / "run.json").read_text())
        config = dict(record["config"])
        config["out"] = str(tmp_path / "again")
        cfg_file = tmp_path / "replay.json"
        cfg_file.write_text(json.dumps(config))
        assert run([record["command"], "--config", cfg_file]) == 0
        assert tree_hash(tmp_path / "again") == tree_hash(tiny_data)


class TestConfigResolution:
    def test_flags_override_config_file(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"domains": 2, "n": 3, "size": 32,
                                   "out": str(tmp_path / "a")}))
        assert run(["synth-data", "--config", cfg, "--n", 5]) == 0
        record = json.loads((tmp_path / "a" / "run.json").read_text())
        assert record["config"]["n"] == 5
        assert record["config"]["domains"] == 2
        assert len(list((tmp_path / "a").rglob("*.png"))) == 10

    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"frobnicate": 1, "out": str(tmp_path / "x")}))
        assert run(["synth-data", "--config", cfg]) == 2
        capsys.readouterr()

    def test_missing_config_file(self, tmp_path, capsys):
        assert run(["synth-data", "--config", tmp_path / "none.json",
                    "--out", tmp_path / "y"]) == 2
        capsys.readouterr()


class TestAugmentCommand:
    def test_classic_mode_without_checkpoint(self, tiny_data, tmp_path):
        out = tmp_path / "aug"
        assert run(["augment", "--in", tiny_data, "--out", out,
                    "--mode", "hsv", "--seed", 3]) == 0
        rows = list(csv.DictReader(open(out / "augmented.csv", newline="")))
        assert len(rows) == 24
        assert {r["seed"] for r in rows} == {"3"}
        assert len(list(out.rglob("*.png"))) == 24

    def test_domain_mode_requires_checkpoint(self, tiny_data, tmp_path, capsys):
        assert run(["augment", "--in", tiny_data, "--out", tmp_path / "z",
                    "--mode", "domain"]) == 2
        err = capsys.readouterr().err
        assert "checkpoint" in err

    def test_deterministic_under_seed(self, tiny_data, tmp_path):
        for name in ("a", "b"):
            assert run(["augment", "--in", tiny_data, "--out", tmp_path / name,
                        "--mode", "geometric", "--seed", 9]) == 0
        assert tree_hash(tmp_path / "a") == tree_hash(tmp_path / "b")


class TestBatchMetricsCommand:
    def test_report_files(self, tiny_data, tmp_path):
        out = tmp_path / "rep"
        assert run(["batch-metrics", "--tiles", tiny_data, "--k", 5,
                    "--method", "pca", "--out", out]) == 0
        stats = list(csv.reader(open(out / "stats.csv", newline="")))
        assert len(stats[0]) == 14  # 13 features + domain
        assert len(stats) == 25
        emb = list(csv.reader(open(out / "embedding.csv", newline="")))
        assert emb[0] == ["x", "y", "domain"]
        mld_val = float((out / "mld.txt").read_text())
        assert 0.0 <= mld_val <= 1.0
        assert (out / "embedding.png").stat().st_size > 0

    def test_pca_deterministic(self, tiny_data, tmp_path):
        for name in ("m1", "m2"):
            assert run(["batch-metrics", "--tiles", tiny_data, "--k", 5,
                        "--method", "pca", "--out", tmp_path / name]) == 0
        a = (tmp_path / "m1" / "mld.txt").read_text()
        assert a == (tmp_path / "m2" / "mld.txt").read_text()


class TestTrainGanCommand:
    def test_tiny_run_and_resume_flag(self, tiny_data, tmp_path):
        out = tmp_path / "gan"
        assert run(["train-gan", "--data", tiny_data, "--out", out,
                    "--iters", 2, "--batch-size", 1, "--base-channels", 8,
                    "--checkpoint-every", 1]) == 0
        assert (out / "ckpt_000002").is_dir()
        log = list(csv.reader(open(out / "train_log.csv", newline="")))
        assert log[0][0] == "iter" and len(log) == 3
        record = json.loads((out / "run.json").read_text())
        assert record["config"]["iters"] == 2
        # resume to 3 iterations from the saved checkpoint
        assert run(["train-gan", "--data", tiny_data, "--out", out,
                    "--iters", 3, "--batch-size", 1, "--base-channels", 8,
                    "--checkpoint-every", 1,
                    "--resume", out / "ckpt_000002"]) == 0
        assert (out / "ckpt_000003").is_dir()


@pytest.fixture(scope="module")
def trained(tiny_data, tmp_path_factory):
    out = tmp_path_factory.mktemp("clf")
    spec = {"train_domain": 0, "aug_strategy": "geometric", "repeats": 1,
            "classifier": {"epochs": 1, "batch_size": 8, "seed": 0}}
    spec_file = out / "spec.json"
    spec_file.write_text(json.dumps(spec))
    code = run(["train-classifier", "--spec", spec_file,
                "--data", tiny_data, "--out", out])
    assert code == 0
    return out


class TestClassifierCommands:
    def test_outputs(self, trained):
        rows = list(csv.DictReader(open(trained / "results.csv", newline="")))
        assert len(rows) == 2  # 1 repeat x 2 test domains
        assert {r["aug"] for r in rows} == {"geometric"}
        assert (trained / "bars.png").is_file()
        assert (trained / "bars.csv").is_file()
        assert any(trained.glob("models_*/geometric_d0_r0/weights.pt"))

    def test_spec_inline_closure(self, trained, tiny_data, tmp_path):
        record = json.loads((trained / "run.json").read_text())
        assert "spec_inline" in record["config"]
        replay = dict(record["config"])
        replay["out"] = str(tmp_path / "again")
        # the original spec file is gone; the embedded copy must suffice
        replay["spec"] = str(tmp_path / "missing.json")
        cfg = tmp_path / "replay.json"
        cfg.write_text(json.dumps(replay))
        assert run(["train-classifier", "--config", cfg]) == 0
        a = (trained / "results.csv").read_text()
        b = (tmp_path / "again" / "results.csv").read_text()
        assert a == b

    def test_evaluate_matches_training_rows(self, trained, tiny_data, tmp_path):
        model = next(trained.glob("models_*/geometric_d0_r0"))
        out_csv = tmp_path / "eval.csv"
        assert run(["evaluate", "--model", model, "--data", tiny_data,
                    "--out", out_csv]) == 0
        eval_rows = list(csv.DictReader(open(out_csv, newline="")))
        train_rows = list(csv.DictReader(open(trained / "results.csv",
                                              newline="")))
        assert len(eval_rows) == len(train_rows)
        for a, b in zip(eval_rows, train_rows):
            assert a["pr_auc"] == b["pr_auc"] and a["f1"] == b["f1"]

    def test_report_merges_csvs(self, trained, tmp_path):
        out = tmp_path / "fig.png"
        assert run(["report", "--results", trained / "results.csv",
                    trained / "results.csv", "--out", out]) == 0
        assert out.is_file() and out.stat().st_size > 0
        summary = list(csv.DictReader(open(out.with_suffix(".csv"),
                                           newline="")))
        assert len(summary) > 0

    def test_bad_spec_json(self, tiny_data, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run(["train-classifier", "--spec", bad, "--data", tiny_data,
                    "--out", tmp_path / "o"]) == 2
        capsys.readouterr()


class TestTileCommand:
    def test_tiles_an_image(self, tmp_path):
        from stainaug.io import write_png
        rng = np.random.default_rng(0)
        # mostly dark tissue-like values so every tile passes the filter
        image = 0.3 + 0.2 * rng.random((3, 96, 64), dtype=np.float32)
        mask = np.zeros((96, 64), dtype=np.float32)
        mask[:40, :40] = 1.0
        write_png(tmp_path / "img.png", image)
        write_png(tmp_path / "mask.png", np.stack([mask] * 3))
        out = tmp_path / "tiles"
        assert run(["tile", "--image", tmp_path / "img.png",
                    "--mask", tmp_path / "mask.png", "--size", 32,
                    "--min-tissue", 0.1, "--domain", 4, "--out", out]) == 0
        rows = list(csv.DictReader(open(out / "manifest.csv", newline="")))
        assert len(rows) == 6  # 3x2 grid of 32px tiles
        assert {r["domain_id"] for r in rows} == {"4"}
        labels = {(r["grid_x"], r["grid_y"]): r["label"] for r in rows}
        # grid coordinates are pixel offsets; top-left is fully tumor,
        # the bottom row lies outside the mask entirely
        assert labels[("0", "0")] == "tumor"
        assert labels[("0", "64")] == "non-tumor"
        assert labels[("32", "64")] == "non-tumor"
