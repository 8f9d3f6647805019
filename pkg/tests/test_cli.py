from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from hanzawa_mhd.cli import atomic_write, run
from hanzawa_mhd.config import ConfigParseError, parse_text

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_unknown_subcommand_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        run(["frobnicate"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_verify_identities_sphere(tmp_path):
    out = tmp_path / "report.json"
    code = run(["verify", "--suite", "identities", "--surface", str(CONFIGS / "sphere.yaml"),
                "--out", str(out)])
    assert code == 0
    rep = json.loads(out.read_text())
    recs = rep["body"]["suites"][0]["records"]
    assert recs and all(r["pass"] and r["max_rel_err"] <= 1e-8 for r in recs)
    for r in recs:
        assert {"name", "ref", "n_points", "max_rel_err", "observed_order", "pass"} <= set(r)


def test_report_body_is_deterministic(tmp_path):
    bodies = []
    for k in range(2):
        out = tmp_path / f"r{k}.json"
        assert run(["verify", "--suite", "curvature,degeneracy", "--surface",
                    str(CONFIGS / "sphere.yaml"), "--out", str(out)]) == 0
        bodies.append(json.dumps(json.loads(out.read_text())["body"], sort_keys=True))
    assert bodies[0] == bodies[1]


def test_failing_check_exits_1(tmp_path, capsys):
    cfg = tmp_path / "strict.yaml"
    cfg.write_text("verify:\n  suites: [identities]\n  draws: 2\n"
                   "  tolerances: {identities: 1.0e-30}\n"
                   "surface: {kind: sphere, params: {R: 1.0}, grid: {nu: 12, nv: 24}}\n")
    out = tmp_path / "r.json"
    assert run(["report", "--config", str(cfg), "--out", str(out)]) == 1
    assert "FAILED identities/" in capsys.readouterr().err
    body = json.loads(out.read_text())["body"]
    assert body["pass"] is False
    assert body["selection"]["identities"]["tol"] == 1e-30


def test_curvature_concentric_csv(tmp_path):
    out = tmp_path / "h.csv"
    assert run(["curvature", "--surface", str(CONFIGS / "sphere.yaml"), "--height", "const:0.1",
                "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert list(rows[0]) == ["u", "v", "H_formula", "H_oracle", "abs_err"]
    H = np.array([float(r["H_formula"]) for r in rows])
    assert np.max(np.abs(H + 1 / 0.55)) < 1e-9


def test_curvature_bad_height(capsys):
    assert run(["curvature", "--surface", str(CONFIGS / "sphere.yaml"), "--height", "cubic"]) == 2


def test_norms_builtin(capsys):
    assert run(["norms", "--func", "x", "--norm", "G:0.5:2"]) == 0
    assert abs(float(capsys.readouterr().out) - 1.0) < 0.01


def test_norms_csv(tmp_path, capsys):
    x = np.linspace(0, 1, 101)
    f = tmp_path / "f.csv"
    f.write_text("x,value\n" + "".join(f"{a},{a}\n" for a in x))
    assert run(["norms", "--csv", str(f), "--norm", "L:2"]) == 0
    assert abs(float(capsys.readouterr().out) - 1 / np.sqrt(3)) < 1e-4


def test_norms_bad_spec():
    assert run(["norms", "--func", "x", "--norm", "W:0.5"]) == 2


def test_norms_probe_json(tmp_path):
    out = tmp_path / "probe.json"
    assert run(["norms", "--probe", "--norm", "W:0.5:2", "--pairs", "5", "--grids", "9", "17",
                "--out", str(out)]) == 0
    body = json.loads(out.read_text())["body"]
    assert [r["grid"] for r in body["probe"]] == [9, 17]
    assert body["grid_drift"] < 10


def test_evolve_writes_snapshots_and_trace(tmp_path):
    cfg = tmp_path / "ev.yaml"
    cfg.write_text("""
evolution:
  box: {n: 9}
  dt: 0.0025
  T: 0.0125
  max_iter: 4
  snapshots: 3
  velocity: {name: shear, amp: 0.2}
  magnetic: {name: bump, amp: 0.01}
  height: {kind: random, sup: 0.01, seed: 0}
  surface: {kind: sphere, params: {R: 0.25}, center: [0.5, 0.5, 0.5], grid: {nu: 12, nv: 24}}
""")
    assert run(["evolve", "--config", str(cfg), "--out-dir", str(tmp_path / "o")]) == 0
    trace = json.loads((tmp_path / "o" / "trace.json").read_text())["body"]["trace"]
    assert trace["iterations"] >= 2 and not trace["gate_tripped"]
    with (tmp_path / "o" / "B_snapshots.csv").open() as fh:
        assert next(csv.reader(fh)) == ["t", "x", "y", "z", "Bx", "By", "Bz"]
    with (tmp_path / "o" / "h_snapshots.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "u", "v", "h"]
    assert len({r[0] for r in rows[1:]}) == 3


@pytest.mark.parametrize("text,line,col", [
    ("surface:\n  kind: sphere\n  grid: {nu: 8, nvv: 16}\n", 3, 17),
    ("verify:\n  suites: [geometry, nope]\n", 2, 22),
    ("hanzawa:\n  delta0: 1.5\n", 2, 3),
    ("verify:\n  seeds: []\n", 2, 3),
    ("verify:\n  tolerances: {frechet: -1}\n", 2, 16),
    ("surface: [kind: sphere\n", 2, 1),
])
def test_config_errors_carry_position(text, line, col):
    with pytest.raises(ConfigParseError) as exc:
        parse_text(text, "c.yaml")
    assert (exc.value.line, exc.value.col) == (line, col)


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("kind: sphere\nparams: {R: 1.0}\ngrid: {nu: 8, nvv: 16}\n")
    assert run(["curvature", "--surface", str(bad)]) == 2
    assert "bad.yaml:3:" in capsys.readouterr().err


def test_missing_config_exit_code(tmp_path):
    assert run(["report", "--config", str(tmp_path / "nope.yaml")]) == 2


def test_bare_surface_file_is_wrapped():
    cfg = parse_text("kind: torus\nparams: {R: 2.0, r: 0.5}\n")
    assert cfg.data["surface"]["kind"] == "torus"
    assert cfg.digest() == parse_text("surface:\n  kind: torus\n  params: {R: 2.0, r: 0.5}\n").digest()


def test_atomic_write_replaces(tmp_path):
    p = tmp_path / "a" / "f.txt"
    atomic_write(p, "one")
    atomic_write(p, "two")
    assert p.read_text() == "two"
    assert [q.name for q in p.parent.iterdir()] == ["f.txt"]
