from __future__ import annotations

import json
from pathlib import Path

import pytest

from unirec.cli import EXIT_CONFIG, EXIT_DATA, main

TINY = str(Path(__file__).resolve().parents[1] / "configs" / "tiny.json")


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    run_dir = None
    for line in out.splitlines():
        if line.startswith("run_dir="):
            run_dir = Path(line.split("=", 1)[1])
    return code, out, err, run_dir


def test_gen_data_is_byte_identical(tmp_path, capsys):
    _, _, _, a = run(capsys, "gen-data", "--config", TINY, "--out", str(tmp_path / "a"))
    _, _, _, b = run(capsys, "gen-data", "--config", TINY, "--out", str(tmp_path / "b"))
    names = sorted(p.name for p in a.iterdir() if p.name != "manifest.json")
    assert names and names == sorted(p.name for p in b.iterdir() if p.name != "manifest.json")
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_config_errors_exit_2(tmp_path, capsys):
    code, _, err, _ = run(capsys, "train", "--config", TINY, "--set", "train.bogus=1",
                          "--set", "model.heads=0", "--out", str(tmp_path))
    assert code == EXIT_CONFIG and "train.bogus: unknown key" in err
    code, _, err, _ = run(capsys, "train", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path))
    assert code == EXIT_CONFIG and "not found" in err


def test_missing_data_exits_3(tmp_path, capsys):
    code, _, err, _ = run(capsys, "prepare", "--config", TINY, "--set",
                          f"data.interactions_path=\"{tmp_path / 'missing.tsv'}\"", "--out", str(tmp_path))
    assert code == EXIT_DATA
    code, _, _, _ = run(capsys, "eval", "--checkpoint", str(tmp_path / "none.ckpt"), "--out", str(tmp_path))
    assert code == EXIT_DATA


def test_train_eval_rerun_from_manifest_is_bitwise(tmp_path, capsys):
    code, out, _, first = run(capsys, "train", "--config", TINY, "--out", str(tmp_path))
    assert code == 0 and out.splitlines()[0].startswith("epoch L_recom")
    manifest = json.loads((first / "manifest.json").read_text())
    assert manifest["command"] == "train" and manifest["seeds"]["train"] == 0
    _, _, _, second = run(capsys, "train", "--config", str(first / "manifest.json"), "--out", str(tmp_path))
    assert second != first
    assert (first / "checkpoint.ckpt").read_bytes() == (second / "checkpoint.ckpt").read_bytes()
    assert (first / "train_report.txt").read_bytes() == (second / "train_report.txt").read_bytes()
    metrics = []
    for d in (first, second):
        code, _, _, ev = run(capsys, "eval", "--checkpoint", str(d / "checkpoint.ckpt"), "--out", str(tmp_path))
        assert code == 0
        metrics.append((ev / "metrics_test.txt").read_bytes())
    assert metrics[0] == metrics[1] and b"HIT@10=" in metrics[0]

    code, out, _, diag = run(capsys, "diagnose", "--checkpoint", str(first / "checkpoint.ckpt"),
                             "--out", str(tmp_path))
    assert code == 0 and "coverage=" in out
    assert (diag / "histograms.txt").read_text().startswith("layer code category count\n")
    code, _, _, exp = run(capsys, "export", "--checkpoint", str(first / "checkpoint.ckpt"), "--out", str(tmp_path))
    assert code == 0
    assert {p.name for p in exp.iterdir()} >= {"codebooks.txt", "assignments.txt", "unified.txt", "labels.tsv"}
    code, _, err, _ = run(capsys, "eval", "--checkpoint", str(first / "checkpoint.ckpt"), "--config", TINY,
                          "--out", str(tmp_path))
    assert code == EXIT_CONFIG


def test_ablate_table_shape(tmp_path, capsys):
    code, out, _, d = run(capsys, "ablate", "--config", TINY, "--set", "train.max_epochs=1", "--out", str(tmp_path))
    assert code == 0
    rows = [r.split("\t") for r in (d / "ablation.tsv").read_text().splitlines()]
    assert rows[0][0] == "mode" and [r[0] for r in rows[1:]] == ["id_only", "semantic_only", "unified"]
    assert all(len(r) == len(rows[0]) for r in rows)
    assert rows[1][-1] == "0.00%"
    assert {p.name for p in d.iterdir() if p.is_dir()} == {"id_only", "semantic_only", "unified"}


def test_sweep_rows(tmp_path, capsys):
    code, _, _, d = run(capsys, "sweep", "--config", TINY, "--set", "train.max_epochs=1", "--values", "0", "4",
                        "--out", str(tmp_path))
    assert code == 0
    rows = (d / "sweep.tsv").read_text().splitlines()
    assert [r.split("\t")[0] for r in rows] == ["D", "0", "4"]
