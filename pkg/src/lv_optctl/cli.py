"""Command line front end: runs, convergence studies, dynamics reports,
field export and the two finite-difference self checks.

Configuration comes from an INI file with sections [model],
[discretization], [optimizer] and [experiment]; every key has a baked-in
default so `lv-optctl run --preset A` needs no file at all. Command line
flags win over config values, config values win over preset defaults.
"""

from __future__ import annotations

import argparse
import configparser
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .adjoint_solver import adjoint_sweep, tangent_sweep
from .dynamics import fixed_points, simulate_kinetics
from .errors import SolverError
from .fem import FeSpace
from .mesh import build_structured
from .objective import (
    ControlPair,
    control_inner,
    control_norm,
    gradient,
    objective_parts,
    second_directional,
)
from .optimizer import NcgConfig, optimize
from .presets import (
    MESH_LADDER,
    PRESETS,
    T_FINAL,
    StudyCase,
    base_params,
    build_data,
    make_case,
    mesh_size,
    num_steps,
    table_functional,
)
from .state_solver import Discretization, FieldTarget, ModelParams, ProblemData
from .timestepping import TimeGrid

MODEL_KEYS = (
    "a", "b", "c", "d", "eps1", "eps2",
    "lambda1", "lambda2", "gamma1", "gamma2",
)


def _fmt(v: float) -> str:
    # fixed 11 significant digits keeps CSV output byte-stable
    return f"{float(v):.11g}"


def load_config(path: str | None) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser()
    cfg.read_dict({"model": {}, "discretization": {}, "optimizer": {}, "experiment": {}})
    if path:
        read = cfg.read(path)
        if not read:
            raise FileNotFoundError(f"config file not found: {path}")
    return cfg


def _params_from_config(cfg: configparser.ConfigParser, preset_name: str | None) -> ModelParams:
    if preset_name:
        params = base_params(PRESETS[preset_name.upper()])
    else:
        params = ModelParams()
    sec = cfg["model"]
    kwargs = {key: sec.getfloat(key) for key in MODEL_KEYS if key in sec}
    if "control_kind" in sec:
        kwargs["control_kind"] = sec.get("control_kind")
    for key in ("g_lo", "g_hi"):
        if key in sec:
            raw = sec.get(key).strip()
            kwargs[key] = None if raw.lower() in ("", "none") else float(raw)
    return replace(params, **kwargs) if kwargs else params


def _optimizer_from_config(cfg: configparser.ConfigParser) -> NcgConfig:
    sec = cfg["optimizer"]
    kwargs = {}
    for key in ("tol", "sigma", "rho", "step0"):
        if key in sec:
            kwargs[key] = sec.getfloat(key)
    if "max_iters" in sec:
        kwargs["max_iters"] = sec.getint("max_iters")
    if "line_search" in sec:
        kwargs["line_search"] = sec.get("line_search")
    if "full_adjoint" in sec:
        kwargs["full_adjoint"] = sec.getboolean("full_adjoint")
    return NcgConfig(**kwargs)


def _custom_case(cfg: configparser.ConfigParser, params: ModelParams, n: int) -> StudyCase:
    """Build a row outside the named presets, straight from config keys."""
    dis = cfg["discretization"]
    exp = cfg["experiment"]
    k = dis.getint("k", 0)
    degree = dis.getint("degree", 1)
    T = dis.getfloat("t_final", T_FINAL)
    bc = "dirichlet" if params.control_kind == "distributed" else "free"
    space = FeSpace(build_structured(n), degree, bc)
    N = dis.getint("num_steps", max(1, num_steps(n, 8.0 if params.control_kind == "distributed" else 2.0, T)))
    grid = TimeGrid.uniform(T, N)

    y10v = exp.getfloat("y10_const", 16.0)
    y20v = exp.getfloat("y20_const", 25.0)
    y10 = lambda x1, x2: y10v + 0.0 * x1
    y20 = lambda x1, x2: y20v + 0.0 * x1
    targets = exp.get("targets", "constant")
    if targets == "initial":
        y1d = lambda t, x1, x2: y10v + 0.0 * x1
        y2d = lambda t, x1, x2: y20v + 0.0 * x1
    else:
        y1d = lambda t, x1, x2: 0.0 * x1
        y2d = lambda t, x1, x2: 20.0 + 0.0 * x1
    data = ProblemData(y10=y10, y20=y20, y1d=y1d, y2d=y2d, T=T)
    preset = PRESETS["A"] if params.control_kind == "distributed" else PRESETS["D"]
    preset = replace(preset, name="custom", k=k, degree=degree,
                     bounds=None if params.g_lo is None and params.g_hi is None else (params.g_lo, params.g_hi))
    return StudyCase(preset, n, params, data, space, grid, k)


def _build_case(args, cfg) -> StudyCase:
    preset_name = getattr(args, "preset", None) or cfg["experiment"].get("preset", "A")
    params = _params_from_config(cfg, None if preset_name == "custom" else preset_name)
    n = getattr(args, "n", None) or cfg["discretization"].getint("n", MESH_LADDER[0])
    if preset_name == "custom":
        return _custom_case(cfg, params, n)
    return make_case(preset_name, n, params=params)


def _initial_controls(disc: Discretization, cfg) -> ControlPair | None:
    g0 = cfg["optimizer"].getfloat("g0", 0.0)
    if g0 == 0.0:
        return None
    return ControlPair.constant(disc, g0)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    t0 = time.perf_counter()
    case = _build_case(args, cfg)
    disc = case.discretization()
    res = optimize(disc, _optimizer_from_config(cfg), _initial_controls(disc, cfg))
    wall = time.perf_counter() - t0
    p = res.parts
    print(f"preset {case.preset.name}  n={case.n}  h={_fmt(mesh_size(case.n))}  "
          f"k={case.k}  degree={case.preset.degree}  N={case.grid.num_steps}")
    print(f"dist1={_fmt(p['dist1'])}  dist2={_fmt(p['dist2'])}  J={_fmt(table_functional(p))}")
    print(f"iterations={res.iterations}  converged={res.converged}  "
          f"state_solves={res.n_state_solves}  wall={wall:.2f}s")
    if not res.converged:
        print(f"warning: {res.message}", file=sys.stderr)
        return 3
    return 0


def cmd_study(args) -> int:
    cfg = load_config(args.config)
    preset_name = args.preset or cfg["experiment"].get("preset", "A")
    if args.mesh_list:
        meshes = [int(s) for s in args.mesh_list.split(",")]
    elif "mesh_list" in cfg["experiment"]:
        meshes = [int(s) for s in cfg["experiment"].get("mesh_list").split(",")]
    else:
        meshes = list(MESH_LADDER)
    meshes = sorted(meshes)  # decreasing h = increasing n
    params = _params_from_config(cfg, None if preset_name == "custom" else preset_name)
    ncg = _optimizer_from_config(cfg)

    out_path = Path(args.out or cfg["experiment"].get("out", f"study_{preset_name}.csv"))
    lines = ["h,dist1,dist2,J,iterations,status"]
    failed = False
    for n in meshes:
        t0 = time.perf_counter()
        try:
            if preset_name == "custom":
                case = _custom_case(cfg, params, n)
            else:
                case = make_case(preset_name, n, params=params)
            disc = case.discretization()
            res = optimize(disc, ncg, _initial_controls(disc, cfg))
            p = res.parts
            row = ",".join([_fmt(mesh_size(n)), _fmt(p["dist1"]), _fmt(p["dist2"]),
                            _fmt(table_functional(p)), str(res.iterations),
                            "ok" if res.converged else "not-converged"])
            if not res.converged:
                failed = True
        except SolverError as err:
            # row records the failure, remaining rows still run
            row = ",".join([_fmt(mesh_size(n)), "", "", "", "", type(err).__name__])
            failed = True
        wall = time.perf_counter() - t0
        print(f"row n={n}: {row.split(',')[-1]} ({wall:.2f}s)")
        lines.append(row)
    out_path.write_text("\n".join(lines) + "\n")
    print(f"study table written to {out_path}")
    return 2 if failed else 0


def _parse_control_list(raw: str | None) -> list[tuple[float, float]]:
    if not raw:
        return [(0.0, 0.0)]
    pairs = []
    for chunk in raw.split(";"):
        s1, s2 = chunk.split(",")
        pairs.append((float(s1), float(s2)))
    return pairs


def cmd_dynamics(args) -> int:
    cfg = load_config(args.config)
    params = _params_from_config(cfg, None)
    out_dir = Path(args.out or cfg["experiment"].get("out", "dynamics"))
    out_dir.mkdir(parents=True, exist_ok=True)
    controls = _parse_control_list(args.controls)

    fp_lines = ["s1,s2,y1,y2,trace,det,discriminant,label"]
    nc_lines = ["s1,s2,branch,y1,y2"]
    tr_lines = ["s1,s2,t,y1,y2"]
    for s1, s2 in controls:
        for rep in fixed_points(params, s1, s2):
            fp_lines.append(",".join([_fmt(s1), _fmt(s2), _fmt(rep.y1), _fmt(rep.y2),
                                      _fmt(rep.trace), _fmt(rep.det),
                                      _fmt(rep.discriminant), rep.label]))
        # prey nullcline: y2 = (a + s1/y1)/b, predator nullcline: y1 = (d - s2/y2)/c
        y1s = np.linspace(1.0, 60.0, 120)
        y2s = (params.a + s1 / y1s) / params.b
        for u, v in zip(y1s, y2s):
            nc_lines.append(",".join([_fmt(s1), _fmt(s2), "prey", _fmt(u), _fmt(v)]))
        y2s = np.linspace(1.0, 60.0, 120)
        y1s = (params.d - s2 / y2s) / params.c
        for u, v in zip(y1s, y2s):
            nc_lines.append(",".join([_fmt(s1), _fmt(s2), "predator", _fmt(u), _fmt(v)]))
        t, y1, y2 = simulate_kinetics(params, 16.125, 24.0, args.horizon, s1, s2)
        for ti, u, v in zip(t, y1, y2):
            tr_lines.append(",".join([_fmt(s1), _fmt(s2), _fmt(ti), _fmt(u), _fmt(v)]))
    (out_dir / "fixed_points.csv").write_text("\n".join(fp_lines) + "\n")
    (out_dir / "nullclines.csv").write_text("\n".join(nc_lines) + "\n")
    (out_dir / "trajectories.csv").write_text("\n".join(tr_lines) + "\n")
    print(f"dynamics report written to {out_dir}/")
    return 0


def _write_node_table(path: Path, coords: np.ndarray, values: np.ndarray) -> None:
    lines = ["x1,x2,value"]
    for (x1, x2), v in zip(coords, values):
        lines.append(",".join([_fmt(x1), _fmt(x2), _fmt(v)]))
    path.write_text("\n".join(lines) + "\n")


def _write_vtk(path: Path, space: FeSpace, values: np.ndarray, name: str) -> None:
    """Legacy ASCII VTK unstructured grid with vertex data only."""
    mesh = space.mesh
    nv = mesh.num_vertices
    nt = mesh.num_triangles
    out = [
        "# vtk DataFile Version 2.0",
        f"{name} snapshot",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {nv} double",
    ]
    for x1, x2 in mesh.vertices:
        out.append(f"{_fmt(x1)} {_fmt(x2)} 0")
    out.append(f"CELLS {nt} {4 * nt}")
    for tri in mesh.triangles:
        out.append(f"3 {tri[0]} {tri[1]} {tri[2]}")
    out.append(f"CELL_TYPES {nt}")
    out.extend(["5"] * nt)
    out.append(f"POINT_DATA {nv}")
    out.append(f"SCALARS {name} double 1")
    out.append("LOOKUP_TABLE default")
    out.extend(_fmt(v) for v in values[:nv])
    path.write_text("\n".join(out) + "\n")


def cmd_export(args) -> int:
    cfg = load_config(args.config)
    case = _build_case(args, cfg)
    disc = case.discretization()
    controls = _initial_controls(disc, cfg)
    state = disc.solve_state(controls)
    adjoint = adjoint_sweep(disc, state)
    out_dir = Path(args.out or cfg["experiment"].get("out", "fields"))
    out_dir.mkdir(parents=True, exist_ok=True)
    times = [float(s) for s in args.times.split(",")] if args.times else [0.0, case.data.T]

    space = case.space
    coords = space.dof_coords
    fields = {
        "y1": (state.y10, state.y1),
        "y2": (state.y20, state.y2),
        "mu1": (None, adjoint.mu1),
        "mu2": (None, adjoint.mu2),
    }
    for idx, t in enumerate(times):
        for name, (at_zero, field) in fields.items():
            if t <= 0.0:
                if at_zero is None:
                    continue
                values = at_zero
            else:
                values = field.eval(min(t, case.data.T))
            stem = f"{name}_t{idx}"
            _write_node_table(out_dir / f"{stem}.csv", coords, values)
            if args.vtk:
                _write_vtk(out_dir / f"{stem}.vtk", space, values, name)
    print(f"fields written to {out_dir}/")
    return 0


def _check_problem(kind: str) -> Discretization:
    """Small fixed configuration used by both finite-difference checks."""
    params = ModelParams(control_kind=kind)
    y10, y20 = (lambda x1, x2: 16.0 + 0.25 * (x1 ** 2 + x2 ** 2)), (lambda x1, x2: 25.0 + 0.0 * x1)
    data = ProblemData(
        y10=y10, y20=y20,
        y1d=lambda t, x1, x2: 0.0 * x1,
        y2d=lambda t, x1, x2: 20.0 + 0.0 * x1,
        T=0.05,
    )
    space = FeSpace(build_structured(4), 1, "dirichlet" if kind == "distributed" else "free")
    grid = TimeGrid.uniform(0.05, 5)
    return Discretization(params, data, space, grid, 0)


def _fd_gradient_errors(disc: Discretization, rng: np.random.Generator, n_dirs: int,
                        full_adjoint: bool, eps: float = 1e-4) -> list[float]:
    g = ControlPair.constant(disc, 0.05)

    def J_of(ctrl: ControlPair) -> float:
        st = disc.solve_state(ctrl, newton_tol=1e-12)
        return objective_parts(disc, st, ctrl)["J"]

    state = disc.solve_state(g, newton_tol=1e-12)
    adj = adjoint_sweep(disc, state, full_coupling=full_adjoint)
    grad = gradient(disc, adj, g)
    errors = []
    for _ in range(n_dirs):
        v = g.with_coeffs(rng.standard_normal(g.stack().shape))
        lhs = control_inner(disc, grad, v)
        jp = J_of(g.with_coeffs(g.stack() + eps * v.stack()))
        jm = J_of(g.with_coeffs(g.stack() - eps * v.stack()))
        fd = (jp - jm) / (2.0 * eps)
        errors.append(abs(lhs - fd) / max(abs(fd), 1e-14))
    return errors


def cmd_gradient_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    ok = True
    for kind in ("distributed", "robin"):
        disc = _check_problem(kind)
        full = _fd_gradient_errors(disc, rng, args.directions, full_adjoint=True)
        simplified = _fd_gradient_errors(disc, rng, args.directions, full_adjoint=False)
        worst = max(full)
        passed = worst <= 1e-4
        ok = ok and passed
        print(f"[{kind}] full-adjoint worst rel err {worst:.3e} over {len(full)} directions: "
              f"{'PASS' if passed else 'FAIL'} (tol 1e-4)")
        print(f"[{kind}] simplified-adjoint worst rel err {max(simplified):.3e} (reported, not gated)")
    return 0 if ok else 1


def cmd_second_order_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    ok = True
    for kind in ("distributed", "robin"):
        disc = _check_problem(kind)
        g = ControlPair.constant(disc, 0.05)
        base = disc.solve_state(g, newton_tol=1e-12)
        # re-target at the attained state so the quadratic model is exact
        disc.data.y1d = FieldTarget(base.y1)
        disc.data.y2d = FieldTarget(base.y2)
        disc._target_cache = {}
        base = disc.solve_state(g, newton_tol=1e-12)

        def J_of(ctrl: ControlPair) -> float:
            st = disc.solve_state(ctrl, newton_tol=1e-12)
            return objective_parts(disc, st, ctrl)["J"]

        worst = 0.0
        for _ in range(args.directions):
            v = g.with_coeffs(rng.standard_normal(g.stack().shape))
            z = tangent_sweep(disc, base, v)
            lhs = second_directional(disc, z, v)
            eps = 1e-3
            jp = J_of(g.with_coeffs(g.stack() + eps * v.stack()))
            jm = J_of(g.with_coeffs(g.stack() - eps * v.stack()))
            j0 = J_of(g)
            fd = (jp - 2.0 * j0 + jm) / eps ** 2
            worst = max(worst, abs(lhs - fd) / max(abs(fd), 1e-14))
        passed = worst <= 1e-3
        ok = ok and passed
        print(f"[{kind}] second-order worst rel err {worst:.3e} over {args.directions} "
              f"directions: {'PASS' if passed else 'FAIL'} (tol 1e-3)")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lv-optctl",
                                 description="Optimal control of a two-species reaction-diffusion system")
    ap.add_argument("--config", help="INI configuration file")
    ap.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="solve one optimal control problem")
    p.add_argument("--preset", choices=[*PRESETS, "custom"])
    p.add_argument("--n", type=int, help="mesh subdivisions per side")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("study", help="convergence study over the mesh ladder")
    p.add_argument("--preset", choices=[*PRESETS, "custom"])
    p.add_argument("--mesh-list", help="comma separated n values")
    p.add_argument("--out", help="CSV output path")
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("dynamics", help="fixed points, nullclines, trajectories")
    p.add_argument("--controls", help="semicolon separated s1,s2 pairs, e.g. '0,0;1,1;2,2;4,4'")
    p.add_argument("--horizon", type=float, default=50.0, help="kinetics time horizon")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_dynamics)

    p = sub.add_parser("export", help="write field snapshots as node tables / VTK")
    p.add_argument("--preset", choices=[*PRESETS, "custom"])
    p.add_argument("--n", type=int)
    p.add_argument("--times", help="comma separated snapshot times")
    p.add_argument("--vtk", action="store_true", help="also write legacy VTK files")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("gradient-check", help="adjoint gradient vs finite differences")
    p.add_argument("--directions", type=int, default=10)
    p.set_defaults(func=cmd_gradient_check)

    p = sub.add_parser("second-order-check", help="second directional value vs finite differences")
    p.add_argument("--directions", type=int, default=5)
    p.set_defaults(func=cmd_second_order_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SolverError, FileNotFoundError, configparser.Error) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
