import csv
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from patternreg.cli import main


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    rc = main(["synth", "--sensors", "5", "--time-steps", "24",
               "--samples", "30", "--missing-rate", "0.05", "--noise", "0.02",
               "--seed", "3", "--out", str(d)])
    assert rc == 0
    return d


@pytest.fixture(scope="module")
def run_dir(dataset_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    rc = main(["train", "--data", str(dataset_dir), "--out", str(out),
               "--arch", "tiny", "--optimizer", "sgd", "--lr", "1e-3",
               "--batch-size", "8", "--epochs", "2", "--folds", "2",
               "--seed", "5", "--jobs", "1"])
    assert rc == 0
    return out


class TestSynth:
    def test_outputs_exist(self, dataset_dir):
        for name in ("manifest.json", "samples.csv", "targets.csv",
                     "report.json"):
            assert (dataset_dir / name).exists()

    def test_deterministic_bytes(self, tmp_path):
        args = ["synth", "--sensors", "3", "--time-steps", "10",
                "--samples", "5", "--seed", "9"]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        for name in ("manifest.json", "samples.csv", "targets.csv"):
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes()

    def test_env_seed_fallback(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PBMR_SEED", "9")
        args = ["synth", "--sensors", "3", "--time-steps", "10",
                "--samples", "5"]
        assert main(args + ["--out", str(tmp_path / "env")]) == 0
        monkeypatch.delenv("PBMR_SEED")
        assert main(args + ["--seed", "9", "--out", str(tmp_path / "flag")]) == 0
        assert (tmp_path / "env" / "samples.csv").read_bytes() == \
            (tmp_path / "flag" / "samples.csv").read_bytes()

    def test_invalid_spec_exits_1(self, tmp_path, capsys):
        rc = main(["synth", "--sensors", "0", "--out", str(tmp_path / "x")])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestConvert:
    def test_outputs_and_fill_summary(self, dataset_dir, tmp_path):
        out = tmp_path / "conv"
        assert main(["convert", "--data", str(dataset_dir),
                     "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        doc = json.loads((out / "tensors.json").read_text())
        blob = (out / "tensors.bin").read_bytes()
        assert summary["samples"] == 30
        assert summary["total_filled"] > 0
        assert len(doc["entries"]) == 30
        assert len(blob) == 30 * 5 * 24 * 4

    def test_normalized_dump_in_unit_interval(self, dataset_dir, tmp_path):
        import numpy as np
        out = tmp_path / "conv"
        main(["convert", "--data", str(dataset_dir), "--out", str(out)])
        data = np.frombuffer((out / "tensors.bin").read_bytes(), dtype="<f4")
        assert data.min() >= 0.0 and data.max() <= 1.0

    def test_reconvert_identical_bytes(self, dataset_dir, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["convert", "--data", str(dataset_dir), "--out", str(a)])
        main(["convert", "--data", str(dataset_dir), "--out", str(b)])
        assert (a / "tensors.bin").read_bytes() == (b / "tensors.bin").read_bytes()
        assert (a / "tensors.json").read_bytes() == (b / "tensors.json").read_bytes()

    def test_fill_count_is_exact(self, tmp_path):
        import numpy as np
        from patternreg.ingest import (DatasetManifest, SampleFrame,
                                       SensorChannel, save_dataset)
        manifest = DatasetManifest(
            sensors=(SensorChannel("s0", 0.0, 1.0),
                     SensorChannel("s1", 0.0, 1.0)),
            time_steps=4)
        missing = np.zeros((2, 4), dtype=bool)
        missing[0, 1] = missing[0, 2] = missing[1, 3] = True  # 3 cells
        frame = SampleFrame("a", np.full((2, 4), 0.5) * ~missing, missing)
        save_dataset(manifest, [frame], tmp_path / "d")
        out = tmp_path / "conv"
        assert main(["convert", "--data", str(tmp_path / "d"),
                     "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["total_filled"] == 3
        assert summary["filled_cells"] == {"s0": 2, "s1": 1}


class TestTrain:
    def test_run_outputs(self, run_dir):
        names = {p.name for p in run_dir.iterdir()}
        assert {"report.json", "metrics.csv", "mae.svg", "rmse.svg", "r2.svg",
                "fold_0.ckpt.json", "fold_0.ckpt.bin",
                "fold_1.ckpt.json", "fold_1.ckpt.bin"} <= names

    def test_report_echoes_full_config(self, run_dir):
        doc = json.loads((run_dir / "report.json").read_text())
        cfg = doc["config"]
        # defaulted values are echoed too
        assert cfg["optimizer"]["momentum"] == 0.9
        assert cfg["optimizer"]["betas"] == [0.9, 0.999]
        assert cfg["arch"]["head_hidden"] == 128
        assert cfg["loss"] == "mse"
        assert cfg["jobs"] == 1
        assert len(doc["records"]) == 2 * 2
        assert set(doc["summary"]) == {"mae", "rmse", "r2"}
        assert set(doc["baselines"]) == {"mean_predictor_mae", "linreg_mae",
                                         "linreg_rmse", "linreg_r2"}

    def test_byte_identical_rerun(self, dataset_dir, tmp_path):
        out = tmp_path / "run"
        args = ["train", "--data", str(dataset_dir), "--arch", "tiny",
                "--batch-size", "8", "--epochs", "2", "--folds", "2",
                "--seed", "5", "--jobs", "1", "--out", str(out)]
        names = ("report.json", "metrics.csv", "fold_0.ckpt.bin",
                 "fold_0.ckpt.json", "fold_1.ckpt.bin", "mae.svg")
        assert main(args) == 0
        first = {name: (out / name).read_bytes() for name in names}
        assert main(args) == 0
        for name in names:
            assert (out / name).read_bytes() == first[name], name

    def test_divergence_exits_2(self, dataset_dir, tmp_path, capsys):
        rc = main(["train", "--data", str(dataset_dir),
                   "--out", str(tmp_path / "x"), "--lr", "1e8",
                   "--batch-size", "8", "--epochs", "2", "--folds", "2",
                   "--seed", "5", "--jobs", "1"])
        assert rc == 2
        assert "loss became" in capsys.readouterr().err

    def test_missing_dataset_exits_1(self, tmp_path, capsys):
        rc = main(["train", "--data", str(tmp_path / "nope"),
                   "--out", str(tmp_path / "x")])
        assert rc == 2 or rc == 1  # OSError from missing file
        assert "error:" in capsys.readouterr().err


class TestEvalPredict:
    def test_eval_writes_metrics(self, dataset_dir, run_dir, tmp_path):
        out = tmp_path / "eval"
        assert main(["eval", "--checkpoint", str(run_dir / "fold_0"),
                     "--data", str(dataset_dir), "--out", str(out)]) == 0
        doc = json.loads((out / "report.json").read_text())
        assert set(doc["metrics"]) == {"mae", "rmse", "r2", "samples"}

    def test_predict_csv(self, dataset_dir, run_dir, tmp_path):
        out = tmp_path / "preds.csv"
        assert main(["predict", "--checkpoint", str(run_dir / "fold_0"),
                     "--data", str(dataset_dir), "--out", str(out)]) == 0
        with open(out) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["sample_id", "prediction"]
        assert len(rows) == 1 + 30
        float(rows[1][1])  # parses

    def test_bad_checkpoint_exits_1(self, dataset_dir, tmp_path, capsys):
        rc = main(["predict", "--checkpoint", str(tmp_path / "ghost"),
                   "--data", str(dataset_dir),
                   "--out", str(tmp_path / "p.csv")])
        assert rc == 1
        assert "checkpoint" in capsys.readouterr().err


class TestPlot:
    def test_rerender_from_report(self, run_dir, tmp_path):
        out = tmp_path / "plots"
        assert main(["plot", "--report", str(run_dir / "report.json"),
                     "--out", str(out)]) == 0
        for name in ("mae.svg", "rmse.svg", "r2.svg", "metrics.csv"):
            assert (out / name).exists()
        assert (out / "mae.svg").read_bytes() == \
            (run_dir / "mae.svg").read_bytes()

    def test_bogus_report_exits_1(self, tmp_path, capsys):
        bogus = tmp_path / "r.json"
        bogus.write_text("{}")
        rc = main(["plot", "--report", str(bogus), "--out", str(tmp_path)])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestUsage:
    def test_unknown_flag_rejected(self, capsys):
        assert main(["synth", "--bogus-flag", "1", "--out", "x"]) == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_unknown_verb_rejected(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_no_verb_rejected(self):
        assert main([]) == 1

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
        assert "VERB" in capsys.readouterr().out

    def test_help_lists_every_flag_with_default(self):
        golden = Path(__file__).with_name("data") / "help_train.txt"
        env = dict(os.environ, COLUMNS="100")
        proc = subprocess.run(
            [sys.executable, "-m", "patternreg.cli", "train", "--help"],
            capture_output=True, text=True, env=env)
        assert proc.returncode == 0
        assert proc.stdout == golden.read_text()
