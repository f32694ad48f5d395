import json
import os
import shutil

import pytest

from taggnn.cli import cli_main


@pytest.fixture
def workspace(toydata_dir, tmp_path):
    data = tmp_path / "data"
    shutil.copytree(toydata_dir, data)
    return tmp_path, str(data)


def _config(tmp_path, **overrides):
    cfg = {"dim": 10, "n_layers": 1, "max_epochs": 4, "patience": 2, "seed": 9}
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return str(path)


def test_split_train_eval_pipeline(workspace, capsys):
    tmp_path, data = workspace
    splits = str(tmp_path / "splits.tsv")
    model_dir = str(tmp_path / "model")
    report = str(tmp_path / "report.json")

    assert cli_main(["split", "--data", data, "--counts", "8,2,2",
                     "--seed", "11", "--out", splits]) == 0
    assert cli_main(["train", "--config", _config(tmp_path), "--data", data,
                     "--splits", splits, "--out", model_dir]) == 0
    assert os.path.exists(os.path.join(model_dir, "manifest.json"))
    assert os.path.exists(os.path.join(model_dir, "train_log.jsonl"))

    assert cli_main(["eval", "--model", model_dir, "--data", data,
                     "--k", "1,3,5", "--report", report]) == 0
    out = json.loads(open(report, encoding="utf-8").read())
    for section in ("without_tags", "partial_tags"):
        assert {"p@1", "p@3", "p@5"} <= set(out[section])
    assert "config_hash" in out["meta"]
    capsys.readouterr()


def test_predict_excludes_linked_tags(workspace, capsys):
    tmp_path, data = workspace
    splits = str(tmp_path / "splits.tsv")
    model_dir = str(tmp_path / "model")
    cli_main(["split", "--data", data, "--counts", "10,1,1", "--seed", "3", "--out", splits])
    cli_main(["train", "--config", _config(tmp_path), "--data", data,
              "--splits", splits, "--out", model_dir])
    capsys.readouterr()
    # i01 keeps tags t_game, t_puzzle, t_music unless it landed in an eval role
    assert cli_main(["predict", "--model", model_dir, "--data", data,
                     "--item-id", "i01", "--k", "3"]) == 0
    predicted = capsys.readouterr().out.split()
    assert len(predicted) == 3
    roles = dict(line.split("\t")[:2] for line in open(splits, encoding="utf-8"))
    if roles["i01"] == "train":
        assert not set(predicted) & {"t_game", "t_puzzle", "t_music"}


def test_gradcheck_command(capsys):
    assert cli_main(["gradcheck"]) == 0
    out = capsys.readouterr().out
    assert "max relative gradient error" in out


def test_unknown_flag_exits_one(capsys):
    assert cli_main(["train", "--frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_item_exits_one(workspace, capsys):
    tmp_path, data = workspace
    splits = str(tmp_path / "splits.tsv")
    model_dir = str(tmp_path / "model")
    cli_main(["split", "--data", data, "--counts", "10,1,1", "--seed", "3", "--out", splits])
    cli_main(["train", "--config", _config(tmp_path), "--data", data,
              "--splits", splits, "--out", model_dir])
    capsys.readouterr()
    assert cli_main(["predict", "--model", model_dir, "--data", data,
                     "--item-id", "nope", "--k", "2"]) == 1


def test_bad_data_exits_one(tmp_path, capsys):
    assert cli_main(["split", "--data", str(tmp_path), "--counts", "1,0,0",
                     "--out", str(tmp_path / "s.tsv")]) == 1
    assert "error" in capsys.readouterr().err


def test_preprocess_writes_filtered_dataset(workspace, capsys):
    tmp_path, data = workspace
    out = str(tmp_path / "filtered")
    assert cli_main(["preprocess", "--data", data, "--out", out,
                     "--item-query", "1", "--query-item", "1",
                     "--item-tag", "1", "--tag-item", "1", "--min-count", "1"]) == 0
    assert os.path.exists(os.path.join(out, "items.tsv"))
    capsys.readouterr()


def test_ablate_report_shape(workspace, capsys):
    tmp_path, data = workspace
    splits = str(tmp_path / "splits.tsv")
    out = str(tmp_path / "ablation.json")
    cli_main(["split", "--data", data, "--counts", "8,2,2", "--seed", "11", "--out", splits])
    cfg = _config(tmp_path, max_epochs=2, dim=6)
    assert cli_main(["ablate", "--config", cfg, "--data", data, "--splits", splits,
                     "--k", "1", "--out", out]) == 0
    capsys.readouterr()
    payload = json.loads(open(out, encoding="utf-8").read())
    names = [row["name"] for row in payload["variants"]]
    assert names == ["base", "no_dual", "no_dual_no_tag_names", "homogeneous"]
    assert [row["name"] for row in payload["layer_sweep"]] == \
           ["layers_1", "layers_2", "layers_3", "layers_4"]
