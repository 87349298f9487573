import json

import numpy as np
import pytest

from tda.ate import fit_dragonnet, read_ate_csv
from tda.cli import build_parser, main
from tda.nn import TrainConfig, save_checkpoint
from tda.survival import fit_hazard, read_survival_csv

FAST = TrainConfig(lr=1e-3, weight_decay=1e-5, batch_size=128, max_epochs=5, patience=3)


def write_ini(path, body):
    path.write_text(body)
    return str(path)


@pytest.fixture
def ate_ini(tmp_path):
    return write_ini(tmp_path / "ate.ini", "[bench]\nreplications = 1\nn = 120\nmethods = Plugin, TdaLast\n"
                     "seed = 9\n[targeting]\ntmax = 5\n[network]\nhidden = 8\nmax_epochs = 4\n")


def test_help_lists_every_flag(capsys):
    assert main(["ate-bench", "--help"]) == 0
    text = capsys.readouterr().out
    for flag in ("--config", "--seed", "--lambda", "--penalty", "--tmax", "--partition", "--out",
                 "--replications", "--n", "--methods", "--workers"):
        assert flag in text
    sub = build_parser()._subparsers._group_actions[0].choices
    assert set(sub) == {"ate-bench", "survival-bench", "target", "simulate", "report"}


def test_usage_errors_exit_2(tmp_path, ate_ini, capsys):
    assert main([]) == 2
    assert main(["ate-bench"]) == 2  # --config is required
    assert main(["ate-bench", "--config", ate_ini, "--penalty", "l3"]) == 2
    assert main(["ate-bench", "--config", str(tmp_path / "missing.ini")]) == 2
    bad = write_ini(tmp_path / "bad.ini", "[bench]\nreplicates = 2\n")
    assert main(["ate-bench", "--config", bad]) == 2
    assert "replicates" in capsys.readouterr().err


def test_runtime_errors_exit_1(tmp_path, ate_ini):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert main(["ate-bench", "--config", ate_ini, "--out", str(blocker / "sub")]) == 1


def test_ate_bench_and_report(tmp_path, ate_ini, monkeypatch, capsys):
    monkeypatch.setenv("TDA_SEED", "123")
    out = tmp_path / "res"
    assert main(["ate-bench", "--config", ate_ini, "--replications", "2", "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["replications"] == 2
    assert manifest["config"]["seed"] == 9  # the file wins over the environment
    prov = manifest["provenance"]
    assert prov["replications"] == "flag" and prov["seed"] == "file" and prov["n"] == "file"
    assert manifest["n_records"] == 4
    capsys.readouterr()
    assert main(["report", "--out", str(out)]) == 0
    assert "TdaLast" in capsys.readouterr().out


def test_seed_from_environment(tmp_path, monkeypatch):
    ini = write_ini(tmp_path / "c.ini", "[bench]\nreplications = 1\nn = 100\nmethods = Plugin\n"
                    "[network]\nhidden = 4\nmax_epochs = 2\n")
    monkeypatch.setenv("TDA_SEED", "77")
    out = tmp_path / "r"
    assert main(["ate-bench", "--config", ini, "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 77 and manifest["provenance"]["seed"] == "env"
    assert main(["ate-bench", "--config", ini, "--seed", "5", "--out", str(out)]) == 0
    assert json.loads((out / "manifest.json").read_text())["provenance"]["seed"] == "flag"


def test_simulate_ate_and_target(tmp_path, capsys):
    csv_path = tmp_path / "d.csv"
    assert main(["simulate", "--task", "ate", "--n", "150", "--seed", "2", "--out", str(csv_path)]) == 0
    data = read_ate_csv(csv_path)
    assert data.n == 150
    model, _ = fit_dragonnet(data.assign_split(0), FAST, 0, hidden=8)
    ckpt = tmp_path / "m.json"
    save_checkpoint(model, ckpt)
    report = tmp_path / "report.json"
    capsys.readouterr()
    assert main(["target", "--model", str(ckpt), "--data", str(csv_path), "--tmax", "4",
                 "--out", str(report)]) == 0
    doc = json.loads(report.read_text())
    assert doc["partition"] == "last-layer"
    assert doc["ci_lower"] <= doc["psi"] <= doc["ci_upper"]
    assert doc["n_iterations"] <= 4
    assert main(["target", "--model", str(ckpt), "--data", str(csv_path), "--partition", "blocks:9"]) == 2
    assert main(["target", "--model", str(tmp_path / "nope.json"), "--data", str(csv_path)]) == 2


def test_simulate_survival_and_target(tmp_path):
    csv_path = tmp_path / "s.csv"
    assert main(["simulate", "--task", "survival", "--n", "150", "--seed", "1", "--out", str(csv_path)]) == 0
    data = read_survival_csv(csv_path)
    assert data.n == 150 and 0.1 < 1 - np.mean(data.delta) < 0.5
    assert (tmp_path / "s.csv.meta.json").exists()
    tr, va = data.split(0)
    net, _ = fit_hazard(data.X, data.t_obs, data.delta, tr, va, rng=0, config=FAST, hidden=(8,))
    ckpt = tmp_path / "h.json"
    save_checkpoint(net, ckpt)
    report = tmp_path / "r.json"
    assert main(["target", "--model", str(ckpt), "--data", str(csv_path), "--tmax", "3",
                 "--out", str(report)]) == 0
    doc = json.loads(report.read_text())
    assert len(doc["initial"]) == len(doc["ci_lower"]) == 50
    assert main(["target", "--model", str(ckpt), "--data", str(csv_path), "--partition", "outcome-heads"]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("x1,event\n0.1,1\n")
    assert main(["target", "--model", str(ckpt), "--data", str(bad)]) == 2
