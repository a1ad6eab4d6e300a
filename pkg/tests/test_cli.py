import json

import pytest

from absamamba.checkpoint import load_checkpoint
from absamamba.cli import main

TOML = """train = "train.jsonl"
dev = "train.jsonl"
test = "train.jsonl"
out_dir = "run"

[model]
word_dim = 8
pos_dim = 4
tag_dim = 4
hidden = 4
heads = 2
ssm_state = 4
kan_grid = 3
epochs = 2
lr = 0.01
batch_size = 8
"""


@pytest.fixture
def workdir(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "train.jsonl"), "--d-min", "2", "--d-max", "4",
                 "--n", "24", "--seed", "3", "--min-len", "6", "--max-len", "10"]) == 0
    (tmp_path / "cfg.toml").write_text(TOML)
    return tmp_path


def test_synth_writes_n_lines(workdir):
    assert len((workdir / "train.jsonl").read_text().splitlines()) == 24


def test_synth_infeasible(tmp_path, capsys):
    code = main(["synth", "--out", str(tmp_path / "x.jsonl"), "--d-min", "8", "--d-max", "40", "--n", "5", "--seed", "0"])
    assert code == 2 and "infeasible" in capsys.readouterr().err


def test_train_then_eval(workdir, capsys):
    out = workdir / "run"
    assert main(["train", "--config", str(workdir / "cfg.toml"), "--seed", "4", "--out", str(out)]) == 0
    report = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert set(report["test"]) == {"accuracy", "macro_f1", "per_class_f1", "n"}

    snapshot = json.loads((out / "config.resolved.json").read_text())
    assert snapshot["model"]["seed"] == 4
    rows = [json.loads(line) for line in (out / "metrics.jsonl").read_text().splitlines()]
    assert [r["epoch"] for r in rows] == [1, 2]
    assert load_checkpoint(out / "checkpoint.npz").config.seed == 4

    assert main(["eval", "--checkpoint", str(out / "checkpoint.npz"), "--data", str(workdir / "train.jsonl"),
                 "--out", str(workdir / "eval.json")]) == 0
    assert json.loads((workdir / "eval.json").read_text()) == report["test"]


def test_train_ablate_and_pool(workdir):
    out = workdir / "abl"
    assert main(["train", "--config", str(workdir / "cfg.toml"), "--ablate", "no_mamba", "--pool", "full",
                 "--epochs", "1", "--out", str(out)]) == 0
    model = json.loads((out / "config.resolved.json").read_text())["model"]
    assert model["variant"] == "no_mamba" and model["pool"] == "full" and model["epochs"] == 1


def test_unknown_config_key(workdir, capsys):
    (workdir / "bad.toml").write_text(TOML + "bogus = 3\n")
    assert main(["train", "--config", str(workdir / "bad.toml")]) == 2
    assert "bogus" in capsys.readouterr().err


def test_eval_missing_checkpoint(workdir):
    assert main(["eval", "--checkpoint", str(workdir / "none.npz"), "--data", str(workdir / "train.jsonl")]) == 2


def test_sweep_with_config(workdir, capsys):
    out = workdir / "sweep"
    assert main(["sweep", "--layers", "1,2", "--config", str(workdir / "cfg.toml"), "--epochs", "1",
                 "--out", str(out)]) == 0
    rows = [json.loads(line) for line in (out / "sweep.jsonl").read_text().splitlines()]
    assert [r["layers"] for r in rows] == [1, 2]
    assert (out / "config.resolved.json").exists()
    assert "layers" in capsys.readouterr().out


def test_bad_ablation_rejected():
    with pytest.raises(SystemExit):
        main(["train", "--config", "x.toml", "--ablate", "no_everything"])
