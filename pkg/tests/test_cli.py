import subprocess
import sys

import pytest

from stgf.cli import main
from stgf.evaluation import read_csv


def _gen(tmp_path, *extra, name="d.jsonl"):
    out = tmp_path / name
    assert main(["generate", "--kind", "cad", "--instances", "2", "--seed", "3", "--out", str(out), *extra]) == 0
    return out


def test_usage_errors_exit_1(tmp_path, capsys):
    assert main([]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["generate", "--kind", "cad"]) == 1
    data = _gen(tmp_path)
    assert main(["eval", "--data", str(data), "--method", "stgf", "--views", "1", "--out", str(tmp_path / "x.csv")]) == 1
    assert main(["check-theorems", "--trials", "0"]) == 1


def test_data_errors_exit_2(tmp_path):
    assert main(["eval", "--data", str(tmp_path / "missing.jsonl"), "--method", "aom", "--views", "1",
                 "--out", str(tmp_path / "x.csv")]) == 2
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{}\n")
    assert main(["eval", "--data", str(bad), "--method", "aom", "--views", "1", "--out", str(tmp_path / "x.csv")]) == 2
    data = _gen(tmp_path)
    model = tmp_path / "m.json"
    model.write_text("not json")
    assert main(["eval", "--data", str(data), "--method", "stgf", "--views", "1", "--model", str(model),
                 "--out", str(tmp_path / "x.csv")]) == 2
    assert main(["eval", "--data", str(data), "--method", "aom", "--views", "9", "--out", str(tmp_path / "x.csv")]) == 2
    assert main(["generate", "--kind", "cad", "--instances", "1", "--seed", "0", "--frames", "1",
                 "--out", str(tmp_path / "y.jsonl")]) == 2


def test_zero_noise_aom_end_to_end(tmp_path):
    data = _gen(tmp_path, "--noise-sigma", "0", "--bias-sigma", "0")
    out = tmp_path / "r.csv"
    assert main(["eval", "--data", str(data), "--method", "aom", "--views", "4", "--out", str(out)]) == 0
    (row,) = read_csv(out)
    assert row.de_mean == 0.0 and row.views_used == 4


def test_train_eval_sweep(tmp_path, capsys):
    data = _gen(tmp_path)
    model = tmp_path / "m.json"
    assert main(["train", "--data", str(data), "--epochs", "2", "--seed", "0", "--model-out", str(model)]) == 0
    assert "calibrated q" in capsys.readouterr().out
    out, plot = tmp_path / "s.csv", tmp_path / "s.svg"
    assert main(["sweep-views", "--data", str(data), "--model", str(model), "--method", "stgf",
                 "--min", "1", "--max", "3", "--out", str(out), "--plot", str(plot)]) == 0
    assert [r.views_used for r in read_csv(out)] == [1, 2, 3]
    assert plot.read_text().lstrip().startswith("<?xml")


def test_check_theorems_exit_0(capsys):
    assert main(["check-theorems", "--trials", "50", "--seed", "1"]) == 0
    assert "max deviation" in capsys.readouterr().out


@pytest.mark.slow
def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "stgf", "check-theorems", "--trials", "5"], capture_output=True)
    assert res.returncode == 0
