import json
from pathlib import Path

import pytest

from unmt.cli import ABLATIONS, ablation_configs, main
from unmt.config import ExperimentConfig, load_config
from unmt.training import METRIC_COLUMNS

SMALL = ["--set", "model.hidden=8", "--set", "adv.hidden=8", "--set", "train.batch_size=8",
         "--set", "train.epochs=1", "--set", "train.iterations=1"]


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--out", str(d), "--vocab-size", "12", "--n-mono", "40", "--n-valid", "8",
                 "--n-test", "8", "--max-len", "5", "--emb-dim", "8", "--seed", "1"]) == 0
    return d


@pytest.fixture(scope="module")
def run_dir(data_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("runs")
    assert main(["train", "--config", str(data_dir / "train.cfg"), "--out", str(out)] + SMALL) == 0
    (d,) = [p for p in out.iterdir() if p.is_dir()]
    return d


def last_error(capsys):
    lines = capsys.readouterr().err.strip().splitlines()
    return json.loads(lines[-1])


def test_synth_writes_files_and_config(data_dir):
    for name in ("train.src", "train.tgt", "valid.src", "test.tgt", "lexicon.src-tgt.tsv", "emb.src.txt"):
        assert (data_dir / name).exists()
    cfg = load_config(data_dir / "train.cfg")
    assert cfg.model_emb_dim == 8 and cfg.seed == 1


def test_train_run_directory(run_dir):
    for name in ("config.cfg", "manifest.json", "metrics.csv", "checkpoints/final.ckpt"):
        assert (run_dir / name).exists()
    man = json.loads((run_dir / "manifest.json").read_text())
    assert man["run_id"] == run_dir.name and man["seed"] == 1
    assert (run_dir / "metrics.csv").read_text().splitlines()[0] == ",".join(METRIC_COLUMNS)


def test_existing_run_dir_needs_force(data_dir, run_dir, capsys):
    argv = ["train", "--config", str(data_dir / "train.cfg"), "--out", str(run_dir.parent)] + SMALL
    assert main(argv) == 1
    err = last_error(capsys)
    assert err["command"] == "train" and "--force" in err["message"]


def test_missing_config_is_json_error(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path)]) == 1
    err = last_error(capsys)
    assert set(err) == {"command", "error", "message"}


def test_translate_preserves_line_count(data_dir, run_dir, tmp_path):
    src = tmp_path / "in.txt"
    src.write_text("\n".join((data_dir / "test.src").read_text().splitlines()[:3] + ["", "s000"]) + "\n")
    out = tmp_path / "out.txt"
    assert main(["translate", "--checkpoint", str(run_dir / "checkpoints/final.ckpt"),
                 "--input", str(src), "--out", str(out), "--direction", "src-tgt"]) == 0
    lines = out.read_text().split("\n")[:-1]
    assert len(lines) == 5 and lines[3] == ""


def test_translate_bad_direction(run_dir, tmp_path, capsys):
    src = tmp_path / "in.txt"
    src.write_text("s001\n")
    assert main(["translate", "--checkpoint", str(run_dir / "checkpoints/final.ckpt"),
                 "--input", str(src), "--direction", "src-src"]) == 1
    assert last_error(capsys)["error"] == "ContractError"


def test_evaluate_identity_is_100(data_dir, tmp_path, capsys):
    ref = data_dir / "test.tgt"
    assert main(["evaluate", "--candidates", str(ref), "--references", str(ref), "--out", str(tmp_path)]) == 0
    res = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert res["bleu"] == pytest.approx(100.0)
    rows = (tmp_path / "metrics.csv").read_text().splitlines()
    assert rows[0] == ",".join(METRIC_COLUMNS) and len(rows) == 2


def test_evaluate_checkpoint(run_dir, capsys):
    assert main(["evaluate", "--checkpoint", str(run_dir / "checkpoints/final.ckpt")]) == 0
    res = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert {"ms_score", "bleu_src_tgt", "bleu_tgt_src"} <= set(res)
    assert all(0 <= v <= 100 for v in res.values())


def test_ablation_rows():
    names = [n for n, _ in ABLATIONS]
    assert names[0] == "full" and len(names) == 7
    cfgs = dict(ablation_configs(ExperimentConfig()))
    assert cfgs["lambda_cd=0"].lambda_cd == 0
    assert cfgs["no-pretraining"].init_pretrained is False
    both = cfgs["lambda_cd=0+no-pretraining"]
    assert both.lambda_cd == 0 and not both.init_pretrained
    assert cfgs["C(x)=x"].noise_p_wd == 0 and cfgs["C(x)=x"].noise_k == 0
    assert cfgs["lambda_auto=0"].lambda_auto == 0 and cfgs["lambda_adv=0"].lambda_adv == 0
    assert len({c.to_text() for c in cfgs.values()}) == 7


@pytest.mark.slow
def test_ablate_writes_table(data_dir, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("UNMT_THREADS", "1")
    small = [a for a in SMALL]
    small[small.index("train.epochs=1")] = "train.epochs=0.25"
    assert main(["ablate", "--config", str(data_dir / "train.cfg"), "--out", str(tmp_path),
                 "--parallel", "4"] + small) == 0
    rows = (tmp_path / "ablation.csv").read_text().splitlines()
    assert rows[0].startswith("run,") and len(rows) == 8
    assert len([p for p in tmp_path.iterdir() if p.is_dir()]) == 7


def test_bad_thread_env(data_dir, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("UNMT_THREADS", "many")
    assert main(["ablate", "--config", str(data_dir / "train.cfg"), "--out", str(tmp_path), "--parallel", "2"]) == 1
    assert "UNMT_THREADS" in last_error(capsys)["message"]
