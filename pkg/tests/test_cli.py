import csv
import json
import shutil

import numpy as np
import pytest

from sbseg.cli import main
from sbseg.io import read_label_map, read_tensor


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert main(["synth", "--n", "3", "--size", "16", "--density", "2", "--seed", "4", "--out", str(data)]) == 0
    assert main(["rdm", "--data", str(data)]) == 0
    assert main([
        "train", "--data", str(data), "--out", str(root / "run"), "--iters", "4", "--batch", "2",
        "--set", "model.width=8", "--set", "schedule.n_steps=5",
    ]) == 0
    assert main(["infer", "--run", str(root / "run"), "--images", str(data), "--dump-every", "2"]) == 0
    return root


def test_pipeline_outputs(run):
    out = run / "run"
    assert (out / "loss.csv").read_text().startswith("iteration,loss\n")
    assert "model.width = 8" in (out / "config.echo").read_text()
    preds = sorted(p.name for p in (out / "pred").iterdir())
    assert len(preds) == 3 and all(p.endswith(".png16") for p in preds)
    prob = read_tensor(out / "prob" / preds[0].replace(".png16", ".bsgt"))
    assert prob.shape == (16, 16, 1) and prob.min() >= 0 and prob.max() <= 1
    steps = sorted(p.name for p in (out / "traj" / preds[0].replace(".png16", "")).iterdir())
    assert steps == ["step_002.bsgt", "step_004.bsgt"]


def test_infer_is_repeatable(run, tmp_path):
    assert main(["infer", "--run", str(run / "run"), "--images", str(run / "data"), "--out", str(tmp_path)]) == 0
    for p in (run / "run" / "pred").iterdir():
        assert np.array_equal(read_label_map(p), read_label_map(tmp_path / "pred" / p.name))


def test_eval_perfect_prediction(run, tmp_path):
    assert main(["eval", "--pred", str(run / "data" / "labels"), "--gt", str(run / "data" / "labels"), "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.txt").read_text())
    assert summary["bpq"] == 1.0 and summary["f1"] == 1.0 and summary["pooled"]["bpq"] == 1.0
    rows = list(csv.DictReader(open(tmp_path / "metrics.csv")))
    assert len(rows) == 3 and all(float(r["bpq"]) == 1.0 for r in rows)


def test_eval_trained_run(run, tmp_path):
    assert main(["eval", "--pred", str(run / "run" / "pred"), "--gt", str(run / "data" / "labels"), "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.txt").read_text())
    assert 0.0 <= summary["bpq"] <= 1.0


def test_shape_stats_command(run, tmp_path):
    out = tmp_path / "shapes.csv"
    assert main(["shape-stats", "--labels", str(run / "data" / "labels"), "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 6
    assert all(0 < float(r["circularity"]) <= np.pi / 4 + 1e-12 for r in rows)


def test_usage_errors_exit_2(run, tmp_path, capsys):
    assert main(["frobnicate"]) == 2
    assert main([]) == 2
    assert main(["train", "--data", str(run / "data"), "--out", str(tmp_path), "--set", "train.nope=1"]) == 2
    assert main(["train", "--out", str(tmp_path)]) == 2
    assert main(["eval", "--pred", str(tmp_path), "--gt", str(tmp_path / "missing"), "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_runtime_errors_exit_1(run, tmp_path):
    bad = tmp_path / "run"
    shutil.copytree(run / "run", bad)
    (bad / "checkpoint.bseg").write_bytes(b"BSEG\x01")
    assert main(["infer", "--run", str(bad), "--images", str(run / "data")]) == 1
