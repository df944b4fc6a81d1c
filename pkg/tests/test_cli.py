import json

import numpy as np
import pytest
from click.testing import CliRunner

from quadrl.cli import cli
from quadrl.fileio import read_obj, write_obj, write_xyz
from quadrl.geometry import TriangulatedView, sample_surface_points
from quadrl.mesh import normalize_mesh
from quadrl.shapes import box, box_with_hole, torus


@pytest.fixture
def runner():
    return CliRunner()


def _write_mesh(path, mesh):
    write_obj(mesh, path)
    return str(path)


def test_tokenize_detokenize_roundtrip(runner, tmp_path):
    obj = _write_mesh(tmp_path / "in.obj", torus())
    tok = str(tmp_path / "t.qtok")
    out = str(tmp_path / "out.obj")

    res = runner.invoke(cli, ["tokenize", obj, tok, "--bits", "10"])
    assert res.exit_code == 0, res.output
    assert "tokens" in res.output

    res = runner.invoke(cli, ["detokenize", tok, out])
    assert res.exit_code == 0, res.output
    back = read_obj(out)
    assert back.n_faces == torus().n_faces


def test_tokenize_text_mode(runner, tmp_path):
    obj = _write_mesh(tmp_path / "in.obj", box())
    tok = tmp_path / "t.txt"
    res = runner.invoke(cli, ["tokenize", obj, str(tok), "--bits", "4", "--text"])
    assert res.exit_code == 0
    lines = tok.read_text().split()
    assert len(lines) == 6 * 12  # one token per line, 12 per face

    out = str(tmp_path / "out.obj")
    res = runner.invoke(cli, ["detokenize", str(tok), out, "--text-bits", "4"])
    assert res.exit_code == 0
    assert read_obj(out).n_faces == 6


def test_reward_command_json(runner, tmp_path):
    mesh = normalize_mesh(torus())
    obj = _write_mesh(tmp_path / "m.obj", mesh)
    pts = sample_surface_points(TriangulatedView(mesh), 1024, 0)
    xyz = tmp_path / "cond.xyz"
    write_xyz(pts, xyz)
    res = runner.invoke(cli, ["reward", obj, str(xyz), "--samples", "1024"])
    assert res.exit_code == 0, res.output
    data = json.loads(res.output)
    assert data["gated"] is True
    assert data["n_quad_rings"] == 20
    assert data["total"] == pytest.approx(2.0)


def test_score_command_csv(runner, tmp_path):
    good = _write_mesh(tmp_path / "good.obj", box())
    bad = _write_mesh(tmp_path / "bad.obj", box_with_hole())
    res = runner.invoke(cli, ["score", good, bad])
    assert res.exit_code == 0, res.output
    lines = res.output.strip().splitlines()
    assert lines[0].startswith("path,cd,hd,nc,f1,quad_ratio,broken_score,is_broken")
    assert lines[1].endswith("false") and lines[2].endswith("true")
    assert lines[-1] == "# broken_ratio,0.500000"


def test_score_with_reference_fills_distances(runner, tmp_path):
    mesh = _write_mesh(tmp_path / "m.obj", box())
    out = tmp_path / "scores.csv"
    res = runner.invoke(
        cli, ["score", mesh, "--reference", mesh, "--samples", "512", "--output", str(out)]
    )
    assert res.exit_code == 0, res.output
    row = out.read_text().splitlines()[1].split(",")
    cd, hd, nc = float(row[1]), float(row[2]), float(row[3])
    assert cd < 0.1 and hd < 0.2 and nc > 0.9


def test_validate_schedule_exit_codes(runner):
    ok = runner.invoke(
        cli,
        "validate-schedule --n1 2000 --n2 100 -t 4 -b 2 --s1 2000 --s2 100 --sigma 50".split(),
    )
    assert ok.exit_code == 0
    assert json.loads(ok.output)["ratio"] == 8.0

    bad = runner.invoke(
        cli,
        "validate-schedule --n1 2000 --n2 100 -t 4 -b 2 --s1 2000 --s2 12 --sigma 5".split(),
    )
    assert bad.exit_code == 1
    assert json.loads(bad.output)["violations"]


def test_bench_async_json(runner):
    res = runner.invoke(
        cli, ["bench-async", "--workers", "8", "--cv", "1.0", "--horizon", "300"]
    )
    assert res.exit_code == 0, res.output
    data = json.loads(res.output)
    assert data["speedup"] > 1.5
    assert data["async_worker_utilization"] == 1.0


def test_missing_input_is_usage_error(runner, tmp_path):
    res = runner.invoke(cli, ["tokenize", str(tmp_path / "nope.obj"), str(tmp_path / "o.qtok")])
    assert res.exit_code == 2  # click reports bad path arguments as usage errors


def test_main_exit_codes(tmp_path):
    import subprocess
    import sys

    bad_content = tmp_path / "bad.qtok"
    bad_content.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
    proc = subprocess.run(
        [sys.executable, "-m", "quadrl.cli", "detokenize", str(bad_content), str(tmp_path / "o.obj")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 1  # malformed content is a validation failure

    proc = subprocess.run(
        [sys.executable, "-m", "quadrl.cli", "tokenize", "--bits"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 64  # usage error
