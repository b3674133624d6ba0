import csv
import json

import numpy as np
import pytest

from cyber0 import cli

SYNTH = ["dataset.name=synthetic", "dataset.samples=300", "dataset.test_samples=60", "dataset.features=5",
         "dataset.classes=3", "n=6", "f=1", "K=4", "T=6", "eval_every=3", "batch_size=16"]


def args(*pairs):
    out = []
    for p in pairs:
        out += ["--set", p]
    return out


def test_dry_run_prints_config_and_forecast(capsys):
    assert cli.main(["dry-run"] + args("T=400")) == 0
    text = capsys.readouterr().out
    assert '"mu": 0.001' in text and "25600 scalars" in text and "3136000" in text


def test_invalid_config_exits_nonzero(capsys):
    assert cli.main(["dry-run"] + args("n=40", "f=20")) == 2
    assert "f:" in capsys.readouterr().err


def test_run_writes_outputs_and_is_byte_stable(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", "--out", str(a), "--quiet"] + args(*SYNTH, "seeds=[0,1,2]", "attack.kind=alie")) == 0
    assert cli.main(["run", "--out", str(b), "--quiet"] + args(*SYNTH, "seeds=[0,1,2]", "attack.kind=alie")) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == ["config.json", "metrics_seed0.csv", "metrics_seed1.csv", "metrics_seed2.csv",
                     "summary.csv", "summary.json"]
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    with open(a / "metrics_seed0.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["epoch", "seed", "accuracy", "train_loss", "uplink_scalars", "downlink_scalars", "wall_ms"]
    assert [r[0] for r in rows[1:]] == ["0", "3", "6"]
    # summary recomputed from the per-seed files
    best = []
    for s in range(3):
        with open(a / f"metrics_seed{s}.csv") as fh:
            best.append(max(float(r["accuracy"]) for r in csv.DictReader(fh)))
    summary = json.loads((a / "summary.json").read_text())
    assert summary["max_accuracy"]["mean"] == pytest.approx(np.mean(best), abs=1e-15)
    assert summary["max_accuracy"]["std"] == pytest.approx(np.std(best), abs=1e-15)
    assert (a / "summary.csv").read_text().splitlines()[0] == "metric,mean,std"
    echoed = json.loads((a / "config.json").read_text())
    assert echoed["n"] == 6 and echoed["attack"]["kind"] == "alie"


def test_config_echo_reproduces_run(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", "--out", str(a), "--quiet"] + args(*SYNTH)) == 0
    assert cli.main(["run", "--out", str(b), "--quiet", "--config", str(a / "config.json")]) == 0
    assert (a / "metrics_seed0.csv").read_bytes() == (b / "metrics_seed0.csv").read_bytes()


def test_failed_run_leaves_no_partial_output(tmp_path, monkeypatch):
    out = tmp_path / "out"

    def boom(*a, **k):
        raise ValueError("simulated failure")

    monkeypatch.setattr(cli.fedsim, "run_seed", boom)
    assert cli.main(["run", "--out", str(out), "--quiet"] + args(*SYNTH)) == 1
    assert not out.exists()
    assert list(tmp_path.iterdir()) == []


def test_missing_mnist_prints_fetch_instructions(tmp_path, capsys):
    assert cli.main(["run", "--out", str(tmp_path / "o")] + args(f"dataset.path={tmp_path}")) == 2
    assert "mnist-data" in capsys.readouterr().err


def test_refuses_non_empty_output(tmp_path):
    (tmp_path / "keep.txt").write_text("x")
    assert cli.main(["run", "--out", str(tmp_path), "--quiet"] + args(*SYNTH)) == 2
    assert (tmp_path / "keep.txt").exists()


def test_timing_flag_records_wall_clock(tmp_path):
    assert cli.main(["run", "--out", str(tmp_path / "o"), "--quiet", "--timing"] + args(*SYNTH)) == 0
    assert json.loads((tmp_path / "o" / "config.json").read_text())["timing"] is True


def test_verify_suite(capsys):
    assert cli.main(["verify", "agg-oracles"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 4 and "FAIL" not in out


def test_verify_reports_failure(monkeypatch, capsys):
    from cyber0 import verify
    monkeypatch.setitem(verify.SUITES, "jl", lambda: [verify.Check("jl", False, 0.5, 0.01)])
    assert cli.main(["verify", "jl"]) == 1
    assert "FAIL jl" in capsys.readouterr().out
