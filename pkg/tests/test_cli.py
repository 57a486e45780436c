import csv
import json

import numpy as np
import pytest

from rbskin import weightfile
from rbskin.cli import EXIT_HASH, EXIT_INPUT, EXIT_USAGE, main
from rbskin.geometry import write_edge_csv

FAST = ["--set", "steps=20", "--set", "batch_size=128", "--set", "n_initial=128", "--set", "upsamplings=1"]


@pytest.fixture(scope="module")
def solved(bar_files, tmp_path_factory):
    out = tmp_path_factory.mktemp("solve") / "w.rbsw"
    code = main(["solve", "--mesh", str(bar_files / "bar.csv"), "--skeleton", str(bar_files / "bar.json"),
                 "--out", str(out), "--seed", "3"] + FAST)
    assert code == 0
    return out


def test_solve_outputs(solved):
    wf = weightfile.load(solved)
    assert wf.features.shape == (256, 2)
    with open(solved.parent / "loss.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["step", "loss", "lr", "N"]
    assert len(rows) == 21
    man = json.loads((solved.parent / "manifest.json").read_text())
    assert man["config"]["seed"] == 3 and man["config"]["n_initial"] == 128
    assert man["overrides"]["steps"] == 20
    assert man["inputs"]["mesh_hash"] == f"{wf.mesh_hash:016x}"


def test_solve_from_manifest_reproduces(solved, tmp_path):
    out = tmp_path / "again.rbsw"
    assert main(["solve", "--config", str(solved.parent / "manifest.json"), "--out", str(out)]) == 0
    assert out.read_bytes() == solved.read_bytes()


def test_print_config(capsys):
    assert main(["solve", "--print-config", "--set", "steps=5"]) == 0
    assert "steps = 5" in capsys.readouterr().out


def test_usage_errors(bar_files, tmp_path, capsys):
    assert main(["solve", "--mesh", str(bar_files / "bar.csv")]) == EXIT_USAGE
    assert main(["solve", "--set", "bogus=1", "--print-config"]) == EXIT_USAGE
    assert main(["solve", "--mesh", str(tmp_path / "missing.csv"), "--skeleton", str(bar_files / "bar.json"),
                 "--out", str(tmp_path / "x.rbsw")]) == EXIT_INPUT


def test_bake_eval_slice(solved, bar_files, tmp_path):
    mesh = str(bar_files / "bar.csv")
    out = tmp_path / "bake.csv"
    assert main(["bake", "--weights", str(solved), "--mesh", mesh, "--out", str(out)]) == 0
    rows = list(csv.reader(open(out, newline="")))
    assert rows[0] == ["vertex_index", "w_1", "w_2"] and len(rows) == 5
    w = np.array(rows[1:], dtype=float)[:, 1:]
    np.testing.assert_allclose(w.sum(1), 1.0, atol=1e-6)

    pts = tmp_path / "pts.csv"
    pts.write_text("x,y\n6.5,7.5\n57.5,7.5\n32,8\n")
    ev = tmp_path / "ev.csv"
    assert main(["eval", "--weights", str(solved), "--mesh", mesh, "--points", str(pts), "--out", str(ev)]) == 0
    rows = list(csv.reader(open(ev, newline="")))
    assert rows[0] == ["w_1", "w_2"]
    w = np.array(rows[1:], dtype=float)
    np.testing.assert_allclose(w[0], [1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(w[1], [0.0, 1.0], atol=1e-12)

    img = tmp_path / "s.pgm"
    assert main(["slice", "--weights", str(solved), "--mesh", mesh, "--handle", "0", "--res", "32",
                 "--out", str(img)]) == 0
    data = img.read_bytes()
    assert data.startswith(b"P5\n32 32\n255\n") and len(data) == len(b"P5\n32 32\n255\n") + 32 * 32
    assert main(["slice", "--weights", str(solved), "--mesh", mesh, "--handle", "5",
                 "--out", str(img)]) == EXIT_USAGE


def test_deform(solved, bar_files, tmp_path):
    mesh = str(bar_files / "bar.csv")
    pose = tmp_path / "pose.json"
    pose.write_text(json.dumps({"transforms": [np.eye(4).ravel().tolist()] * 2}))
    for method in ("lbs", "dqs"):
        out = tmp_path / f"{method}.csv"
        assert main(["deform", "--weights", str(solved), "--mesh", mesh, "--pose", str(pose),
                     "--method", method, "--out", str(out)]) == 0
        np.testing.assert_allclose(np.loadtxt(out, delimiter=","), np.loadtxt(mesh, delimiter=","), atol=1e-9)
    pose.write_text(json.dumps({"transforms": [np.eye(4).ravel().tolist()] * 3}))
    assert main(["deform", "--weights", str(solved), "--mesh", mesh, "--pose", str(pose),
                 "--out", str(tmp_path / "x.csv")]) == EXIT_INPUT


def test_hash_check(solved, tmp_path):
    from rbskin import scenes
    other = tmp_path / "other.csv"
    write_edge_csv(other, *scenes.bar(64.0, 18.0))
    args = ["bake", "--weights", str(solved), "--mesh", str(other), "--out", str(tmp_path / "b.csv")]
    assert main(args) == EXIT_HASH
    assert main(args + ["--ignore-hash"]) == 0


def test_workers_flag(solved, bar_files, tmp_path):
    assert main(["bake", "--weights", str(solved), "--mesh", str(bar_files / "bar.csv"),
                 "--out", str(tmp_path / "b.csv"), "--workers", "0"]) == EXIT_USAGE
