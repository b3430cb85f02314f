import csv
import json

import numpy as np
import pytest

from ginn_augment.cli import run
from ginn_augment.dataset import Column, Schema, TabularDataset, write_csv

SCHEMA = Schema((Column("u", "numerical"), Column("v", "numerical"),
                 Column("c", "categorical", ("p", "q", "r")), Column("y", "label", ("n", "y"))))


@pytest.fixture
def files(tmp_path):
    rng = np.random.default_rng(0)
    rows, labels = [], []
    for i in range(100):
        cls = i % 2
        rows.append([round(float(rng.normal(cls, 0.4)), 6), round(float(rng.random()), 6),
                     "pqr"[int(rng.integers(0, 3))]])
        labels.append("ny"[cls] if i < 70 else None)
    data_path = tmp_path / "data.csv"
    write_csv(data_path, TabularDataset(SCHEMA, rows, labels))
    schema_path = tmp_path / "schema.json"
    schema_path.write_text(json.dumps(SCHEMA.to_dict()))
    return tmp_path, data_path, schema_path


def _read(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_augment_doubles_labeled_rows(files, capsys):
    tmp, data, schema = files
    out = tmp / "aug.csv"
    args = ["augment", "--data", str(data), "--schema", str(schema), "--out", str(out),
            "--factor", "2", "--epochs", "3", "--seed", "1", "--provenance"]
    assert run(args) == 0
    table = _read(out)
    assert table[0] == ["u", "v", "c", "y", "__label__", "__provenance__"]
    assert len(table) - 1 == 140
    assert all(r[3] in ("n", "y") for r in table[1:])
    assert sum(r[5] == "original" for r in table[1:]) == 70
    # generated rows name a labeled source row and carry its label
    src = {int(r[5]): r[3] for r in table[1:] if r[5] != "original"}
    originals = _read(data)[1:]
    assert all(originals[i][3] == y for i, y in src.items())

    out2 = tmp / "aug2.csv"
    assert run(args[:-3] + ["--out", str(out2), "--seed", "1", "--provenance"]) == 0
    assert out.read_bytes() == out2.read_bytes()


def test_refuses_to_overwrite_without_force(files, capsys):
    tmp, data, schema = files
    out = tmp / "model.npz"
    out.write_text("keep")
    args = ["train", "--data", str(data), "--schema", str(schema), "--out", str(out),
            "--epochs", "2"]
    assert run(args) == 1
    assert "--force" in capsys.readouterr().err
    assert out.read_text() == "keep"
    assert run(args + ["--force"]) == 0


def test_train_then_impute_without_missing_is_identity(files):
    tmp, data, schema = files
    ckpt = tmp / "m.npz"
    graph = tmp / "g.txt"
    assert run(["train", "--data", str(data), "--schema", str(schema), "--out", str(ckpt),
                "--epochs", "3", "--graph-dump", str(graph)]) == 0
    assert graph.read_text().startswith("# nodes 100")
    out = tmp / "imp.csv"
    assert run(["impute", "--data", str(data), "--schema", str(schema), "--checkpoint", str(ckpt),
                "--out", str(out)]) == 0
    assert out.read_bytes() == data.read_bytes()


def test_impute_fills_only_missing_cells(files):
    tmp, data, schema = files
    table = _read(data)
    table[1][0] = ""
    table[2][2] = "NA"
    holes = tmp / "holes.csv"
    with open(holes, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(table)
    ckpt = tmp / "m.npz"
    assert run(["train", "--data", str(holes), "--schema", str(schema), "--out", str(ckpt),
                "--epochs", "3"]) == 0
    out = tmp / "imp.csv"
    assert run(["impute", "--data", str(holes), "--schema", str(schema), "--checkpoint", str(ckpt),
                "--out", str(out)]) == 0
    filled = _read(out)
    assert np.isfinite(float(filled[1][0]))
    assert filled[2][2] in ("p", "q", "r")
    for i in range(3, len(table)):
        assert filled[i] == table[i]


def test_unknown_config_keys_are_rejected(files, capsys):
    tmp, data, schema = files
    cfg = tmp / "cfg.json"
    cfg.write_text(json.dumps({"train": {"epochs": 3}}))
    rc = run(["train", "--data", str(data), "--schema", str(schema), "--out", str(tmp / "m.npz"),
              "--config", str(cfg)])
    assert rc == 1
    assert "epochs" in capsys.readouterr().err
    cfg.write_text(json.dumps({"trainer": {}}))
    assert run(["train", "--data", str(data), "--schema", str(schema),
                "--out", str(tmp / "m.npz"), "--config", str(cfg)]) == 1


def test_bad_input_is_reported(files, capsys):
    tmp, data, schema = files
    bad = tmp / "bad.csv"
    bad.write_text("u,v,c,y\n1,2,p,n\n1,2\n")
    rc = run(["train", "--data", str(bad), "--schema", str(schema), "--out", str(tmp / "m.npz")])
    assert rc == 1
    assert "line 3" in capsys.readouterr().err


def test_benchmark_writes_report_files(files, tmp_path, monkeypatch):
    tmp, data, schema = files
    ddir = tmp / "sets"
    ddir.mkdir()
    # benchmark datasets must be fully labeled
    table = _read(data)
    with open(ddir / "toy.csv", "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows([table[0]] + [r for r in table[1:] if r[3]])
    (ddir / "toy.schema.json").write_text(schema.read_text())
    out_dir = tmp / "bench"
    args = ["benchmark", "--datasets", "toy", "--data-dir", str(ddir), "--out-dir", str(out_dir),
            "--trials", "1", "--factors", "2", "--classifiers", "knn", "--epochs", "2"]
    assert run(args) == 0
    report = (out_dir / "report.csv").read_text().splitlines()
    assert report[0] == "dataset,classifier,variant,trial,accuracy"
    assert len(report) == 1 + 2
    cfg = json.loads((out_dir / "config.json").read_text())
    assert cfg["train"]["max_epochs"] == 2
    first = (out_dir / "report.csv").read_bytes()
    assert run(args) == 1
    assert run(args + ["--force"]) == 0
    assert (out_dir / "report.csv").read_bytes() == first
