import json

import numpy as np
import pytest

from ccnn import netpbm
from ccnn.cli import main


def run_cli(capsys, *argv):
    rc = main(list(argv))
    out = capsys.readouterr()
    return rc, out.out, out.err


def test_trace_fixed(tmp_path, capsys):
    out = tmp_path / "t.pgm"
    rc, stdout, _ = run_cli(capsys, "trace", "--size", "16", "--steps", "3", "--seq", "fixed", "--out", str(out))
    assert rc == 0
    img = netpbm.read(out)
    stats = json.loads((tmp_path / "t.json").read_text())
    assert (img == 255).sum() == stats["samples"] == 32
    assert stats["submaps"] == [8, 2, 2]
    assert set(np.unique(img)) <= {0, 255}
    assert json.loads(stdout)["samples"] == 32


def test_trace_lattice_one_per_row(tmp_path, capsys):
    out = tmp_path / "l.pgm"
    rc, _, _ = run_cli(capsys, "trace", "--size", "32", "--steps", "5", "--seq", "lattice", "--out", str(out), "--color")
    assert rc == 0
    img = netpbm.read(out) == 255
    assert img.sum() == 32
    assert (img.sum(axis=0) == 1).all() and (img.sum(axis=1) == 1).all()
    rgb = netpbm.read(tmp_path / "l.ppm")
    assert rgb.shape == (32, 32, 3)
    assert len({tuple(p) for p in rgb[img]}) == 32


def test_trace_zero_steps(tmp_path, capsys):
    out = tmp_path / "z.pgm"
    assert run_cli(capsys, "trace", "--size", "8", "--steps", "0", "--out", str(out))[0] == 0
    assert (netpbm.read(out) == 255).all()


def test_trace_random_seed_env(tmp_path, capsys, monkeypatch):
    a, b = tmp_path / "a.pgm", tmp_path / "b.pgm"
    monkeypatch.setenv("CCNN_SEED", "11")
    run_cli(capsys, "trace", "--size", "16", "--steps", "3", "--seq", "random", "--out", str(a))
    run_cli(capsys, "trace", "--size", "16", "--steps", "3", "--seq", "random", "--seed", "11", "--out", str(b))
    assert a.read_bytes() == b.read_bytes()


def test_trace_seq_file(tmp_path, capsys):
    seq = tmp_path / "s.txt"
    seq.write_text("0\n01\n")
    out = tmp_path / "f.pgm"
    assert run_cli(capsys, "trace", "--size", "8", "--seq-file", str(seq), "--out", str(out))[0] == 0
    assert json.loads((tmp_path / "f.json").read_text())["samples"] == 16
    seq.write_text("0\n0x\n")
    rc, _, err = run_cli(capsys, "trace", "--size", "8", "--seq-file", str(seq), "--out", str(out))
    assert rc == 2 and "line 2" in err


def test_trace_io_error(tmp_path, capsys):
    rc, _, err = run_cli(capsys, "trace", "--size", "8", "--steps", "1", "--out", str(tmp_path / "missing" / "x.pgm"))
    assert rc == 3 and "I/O" in err


def test_verify(capsys):
    rc, stdout, _ = run_cli(capsys, "verify", "--suite", "gradients")
    report = json.loads(stdout)
    assert rc == 0 and report["passed"]
    assert max(r["max_relative_error"] for r in report["results"]) < 1e-4


def test_verify_subset(capsys):
    rc, stdout, _ = run_cli(capsys, "verify", "--suite", "subset")
    assert rc == 0 and json.loads(stdout)["passed"]


def test_unknown_suite(capsys):
    with pytest.raises(SystemExit) as info:
        main(["verify", "--suite", "bogus"])
    assert info.value.code == 2


def test_complexity_output(capsys):
    rc, stdout, _ = run_cli(capsys, "complexity", "--max-steps", "3")
    assert rc == 0
    rows = [line.split() for line in stdout.splitlines() if line and not line.startswith(("#", "scheme"))]
    by_key = {}
    for row in rows:
        by_key.setdefault(row[0], []).append(row)
    chk_double = [r for r in rows if r[0] == "checkered"][:4]
    assert chk_double[3][2:4] == ["1", "8"]
    assert chk_double[3][4:6] == chk_double[3][2:4]
    for row in rows:
        if row[1] == "0":
            assert row[2:4] == ["1", "1"]
        if row[4] != "-":
            assert row[2:4] == row[4:6]


@pytest.mark.slow
def test_train_small(tmp_path, capsys):
    log = tmp_path / "log.json"
    rc, stdout, _ = run_cli(capsys, "train", "--epochs", "2", "--samples", "64", "--out", str(log))
    summary = json.loads(stdout)
    assert rc == 0
    assert summary["parameters"]["cnn"] == summary["parameters"]["ccnn"]
    assert summary["ccnn_final_map"] == [8, 4, 4]
    assert len(json.loads(log.read_text())["cnn"]) == 2
