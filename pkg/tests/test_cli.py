"""Command line interface: config handling, outputs, exit codes."""

import contextlib
import io
import subprocess
import sys

import numpy as np
import pytest

from lv_optctl.cli import build_parser, load_config, main

FAST_ROBIN = """
[model]
control_kind = robin
[discretization]
num_steps = 2
t_final = 0.02
[experiment]
targets = initial
"""


def call(argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        rc = main(argv)
    return rc, out.getvalue(), err.getvalue()


@pytest.fixture
def fast_cfg(tmp_path):
    p = tmp_path / "fast.ini"
    p.write_text(FAST_ROBIN)
    return str(p)


def test_parser_subcommands():
    ap = build_parser()
    args = ap.parse_args(["run", "--preset", "A", "--n", "6"])
    assert args.command == "run" and args.preset == "A" and args.n == 6
    with pytest.raises(SystemExit):
        ap.parse_args(["run", "--preset", "Z"])
    with pytest.raises(SystemExit):
        ap.parse_args([])  # a subcommand is required


def test_load_config_missing_file():
    with pytest.raises(FileNotFoundError):
        load_config("/nonexistent/path.ini")
    rc, _, err = call(["--config", "/nonexistent/path.ini", "run", "--preset", "custom"])
    assert rc == 2 and "error:" in err


def test_config_none_bounds(tmp_path):
    p = tmp_path / "b.ini"
    p.write_text("[model]\ng_lo = none\ng_hi = 0.3\n")
    cfg = load_config(str(p))
    from lv_optctl.cli import _params_from_config

    params = _params_from_config(cfg, "A")
    assert params.g_lo is None and params.g_hi == 0.3


def test_run_custom_converges(fast_cfg):
    rc, out, err = call(["--config", fast_cfg, "run", "--preset", "custom", "--n", "3"])
    assert rc == 0
    assert "converged=True" in out
    assert "n=3" in out and "wall=" in out
    assert err == ""


def test_run_flag_beats_config(tmp_path):
    p = tmp_path / "n4.ini"
    p.write_text(FAST_ROBIN + "n = 4\n")
    rc, out, _ = call(["--config", str(p), "run", "--preset", "custom", "--n", "3"])
    assert rc == 0 and "n=3" in out


def test_run_iteration_cap_exits_3(tmp_path):
    p = tmp_path / "cap.ini"
    p.write_text(FAST_ROBIN + "[optimizer]\nmax_iters = 1\ntol = 1e-16\n")
    rc, out, err = call(["--config", str(p), "run", "--preset", "custom", "--n", "3"])
    assert rc == 3
    assert "converged=False" in out
    assert "iteration limit" in err


def test_study_repeat_runs_are_byte_identical(fast_cfg, tmp_path):
    outs = []
    for i in (1, 2):
        dest = tmp_path / f"s{i}.csv"
        rc, _, _ = call(["--config", fast_cfg, "study", "--preset", "custom",
                         "--mesh-list", "4,3", "--out", str(dest)])
        assert rc == 0
        outs.append(dest.read_bytes())
    assert outs[0] == outs[1]
    lines = outs[0].decode().strip().split("\n")
    assert lines[0] == "h,dist1,dist2,J,iterations,status"
    assert len(lines) == 3
    hs = [float(row.split(",")[0]) for row in lines[1:]]
    assert hs == sorted(hs, reverse=True)  # rows ordered by decreasing h
    for row in lines[1:]:
        cells = row.split(",")
        assert cells[-1] == "ok"
        assert int(cells[4]) >= 1
        assert float(cells[3]) > 0


def test_study_records_failures_and_continues(tmp_path):
    p = tmp_path / "bad.ini"
    # negative searching efficiency makes the prey equation explosive
    p.write_text("[model]\ncontrol_kind = robin\nb = -0.5\n"
                 "[discretization]\nnum_steps = 2\nt_final = 4.0\n")
    dest = tmp_path / "fail.csv"
    rc, out, _ = call(["--config", str(p), "study", "--preset", "custom",
                       "--mesh-list", "3,4", "--out", str(dest)])
    assert rc == 2
    lines = dest.read_text().strip().split("\n")
    assert len(lines) == 3  # both rows attempted despite the first failing
    for row in lines[1:]:
        cells = row.split(",")
        assert cells[-1].endswith("Error")
        assert cells[1] == ""  # distance cells stay empty on failure


def test_dynamics_reports(tmp_path):
    out_dir = tmp_path / "dyn"
    rc, out, _ = call(["dynamics", "--controls", "0,0;1,1", "--horizon", "2.0",
                       "--out", str(out_dir)])
    assert rc == 0
    fp = (out_dir / "fixed_points.csv").read_text().strip().split("\n")
    assert fp[0] == "s1,s2,y1,y2,trace,det,discriminant,label"
    rows = [r.split(",") for r in fp[1:]]
    assert len(rows) == 4  # two fixed points per control pair
    uncontrolled = [r for r in rows if float(r[0]) == 0.0]
    labels = " ".join(r[-1] for r in uncontrolled)
    assert "saddle" in labels
    coex = [r for r in uncontrolled if float(r[2]) > 1.0][0]
    assert float(coex[2]) == pytest.approx(33.0435, abs=1e-3)
    assert float(coex[3]) == pytest.approx(19.5833, abs=1e-3)

    nc = (out_dir / "nullclines.csv").read_text().strip().split("\n")
    assert nc[0] == "s1,s2,branch,y1,y2"
    branches = {r.split(",")[2] for r in nc[1:]}
    assert branches == {"prey", "predator"}

    tr = (out_dir / "trajectories.csv").read_text().strip().split("\n")
    assert tr[0] == "s1,s2,t,y1,y2"
    first = tr[1].split(",")
    assert float(first[3]) == pytest.approx(16.125)
    assert float(first[4]) == pytest.approx(24.0)


def test_export_tables_and_vtk(fast_cfg, tmp_path):
    out_dir = tmp_path / "fields"
    rc, _, _ = call(["--config", fast_cfg, "export", "--preset", "custom", "--n", "3",
                     "--times", "0,0.02", "--vtk", "--out", str(out_dir)])
    assert rc == 0
    # adjoint has no initial-time value, so only the t1 snapshot exists
    assert not (out_dir / "mu1_t0.csv").exists()
    assert (out_dir / "mu1_t1.csv").exists()

    y1 = (out_dir / "y1_t0.csv").read_text().strip().split("\n")
    assert y1[0] == "x1,x2,value"
    assert len(y1) == 1 + 16  # one line per vertex dof on the 3x3 mesh
    vals = np.array([float(r.split(",")[2]) for r in y1[1:]])
    assert np.allclose(vals, 16.0)  # constant initial prey density

    vtk = (out_dir / "y1_t1.vtk").read_text().strip().split("\n")
    assert vtk[0] == "# vtk DataFile Version 2.0"
    assert "ASCII" in vtk[:4] and "DATASET UNSTRUCTURED_GRID" in vtk[:5]
    assert "POINTS 16 double" in vtk
    ci = vtk.index("CELLS 18 72")
    cells = vtk[ci + 1 : ci + 19]
    assert all(c.startswith("3 ") and len(c.split()) == 4 for c in cells)
    ti = vtk.index("CELL_TYPES 18")
    assert vtk[ti + 1 : ti + 19] == ["5"] * 18
    assert "POINT_DATA 16" in vtk


def test_gradient_check_passes_and_is_seed_stable():
    rc1, out1, _ = call(["--seed", "7", "gradient-check", "--directions", "2"])
    assert rc1 == 0
    assert out1.count("PASS") == 2
    assert out1.count("simplified-adjoint") == 2
    rc2, out2, _ = call(["--seed", "7", "gradient-check", "--directions", "2"])
    assert out2 == out1


def test_second_order_check_passes():
    rc, out, _ = call(["second-order-check", "--directions", "1"])
    assert rc == 0
    assert out.count("PASS") == 2


def test_module_entry_smoke():
    proc = subprocess.run(
        [sys.executable, "-m", "lv_optctl.cli", "dynamics", "--horizon", "1.0",
         "--out", "/tmp/_cli_smoke_dyn"],
        capture_output=True, text=True, timeout=120,
    )
    assert proc.returncode == 0
    assert "dynamics report" in proc.stdout
