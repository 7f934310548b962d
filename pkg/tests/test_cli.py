import csv
import json
import os

import numpy as np
import pytest

from fpsi.cli import EXIT_COLLISION, EXIT_CONFIG, EXIT_OK, git_blob_hash, main
from fpsi.grids import SolidGrid, write_snapshot
from fpsi.scheme import LEDGER_COLUMNS, WINDOW_COLUMNS

SMALL = """[solid]
nx = 7
ny = 7
[fluid]
nx = 13
ny = 13
[scheme]
tau = 0.02
h = 0.1
T = 0.2
"""


def _write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _read(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_blob_hash_matches_git():
    # git hash-object of "hello\n"
    assert git_blob_hash(b"hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a"


def test_check_passes(capsys):
    assert main(["check", "--seed", "1"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 9 and all(line.startswith("PASS") for line in out)


def test_toy_writes_csv_and_manifest(tmp_path, capsys):
    out = str(tmp_path / "toy")
    assert main(["toy", "--energy", "quadratic", "--tau", "0.0025", "--h", "0.05", "--horizon", "1",
                 "--x0", "1", "0", "--xstar", "0", "0", "--out", out]) == EXIT_OK
    rows = _read(os.path.join(out, "toy.csv"))
    assert len(rows) == 401 and float(rows[0]["x0"]) == 1.0
    man = json.load(open(os.path.join(out, "manifest.json")))
    assert man["command"] == "toy" and man["violations"] == 0
    assert main(["toy", "--scheme", "naive", "--energy", "quadratic", "--out", out]) == EXIT_OK


def test_equilibrium_run_has_constant_ledger(tmp_path):
    cfg = _write(tmp_path, SMALL + "[initial]\neta0 = equilibrium\nb = zero\n[forcing]\nkind = zero\n")
    out = str(tmp_path / "eq")
    assert main(["fpsi", "--config", cfg, "--out", out, "--snapshot-every", "5"]) == EXIT_OK
    rows = _read(os.path.join(out, "ledger.csv"))
    assert len(rows) == 10
    assert list(rows[0].keys()) == list(LEDGER_COLUMNS)
    assert len({r["E_h"] for r in rows}) == 1
    wins = _read(os.path.join(out, "windows.csv"))
    assert list(wins[0].keys()) == list(WINDOW_COLUMNS) and all(w["holds"] == "1" for w in wins)
    man = json.load(open(os.path.join(out, "manifest.json")))
    assert man["exit_status"] == 0 and man["halt_reason"] == "HorizonReached"
    assert man["inputs"]["config"] == git_blob_hash(open(os.path.join(out, "config.ini"), "rb").read())
    snaps = sorted(os.listdir(os.path.join(out, "snapshots")))
    assert "eta_000000.txt" in snaps and "v_000010.txt" in snaps and "phi_window_0001.txt" in snaps


def test_config_error_exit(tmp_path, capsys):
    cfg = _write(tmp_path, "[material]\na = 3\n")
    assert main(["fpsi", "--config", cfg]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "a > 2q/(q-2) = 4" in err and "line 2" in err
    assert main(["fpsi", "--config", str(tmp_path / "missing.ini")]) == EXIT_CONFIG
    assert main(["fpsi", "--tau", "0.03"]) == EXIT_CONFIG


def test_collision_exit(tmp_path, capsys):
    g = SolidGrid(7, 7)
    bfile = str(tmp_path / "b.txt")
    write_snapshot(bfile, g, np.tile([2.0, 0.0], (g.nnode, 1)))
    text = SMALL.replace("T = 0.2", "T = 0.4") + (
        f"[initial]\noffset = 0.8, 0.5\nb = from-file\nb_file = {bfile}\n"
        "[forcing]\nkind = zero\n[guard]\nclearance_tol = 0.1\n")
    out = str(tmp_path / "coll")
    assert main(["fpsi", "--config", _write(tmp_path, text), "--out", out]) == EXIT_COLLISION
    assert "collision at T* = " in capsys.readouterr().out
    man = json.load(open(os.path.join(out, "manifest.json")))
    assert man["halt_reason"] == "CollisionDetected" and man["t_star"] == pytest.approx(0.06)
    assert "b_file" in man["inputs"]


def test_study_distances_shrink(tmp_path):
    text = SMALL.replace("T = 0.2", "T = 0.1") + (
        "[toy]\nenergy = quadratic\nx0 = 1, 0\nxstar = 0, 0\nT = 2\n"
        "[study]\nh_list = 0.1, 0.05, 0.025\ntau_list = 0.02, 0.01, 0.005\nT = 0.1\n")
    out = str(tmp_path / "study")
    assert main(["study", "--config", _write(tmp_path, text), "--out", out]) == EXIT_OK
    rows = _read(os.path.join(out, "study.csv"))
    for part, sweep, col in (("toy", "h", "oracle_distance"), ("toy", "tau", "cauchy_distance"),
                             ("fpsi", "tau", "cauchy_distance")):
        d = [float(r[col]) for r in rows if r["part"] == part and r["sweep"] == sweep]
        d = [x for x in d if np.isfinite(x)]
        assert len(d) >= 2 and all(a > b for a, b in zip(d, d[1:])), (part, sweep, d)


def test_unwritable_output_exit(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["toy", "--energy", "zero", "--horizon", "0.1", "--out", str(blocker / "sub")]) == 5
