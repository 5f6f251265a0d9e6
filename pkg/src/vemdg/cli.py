"""Command-line front end: ``vemdg {mesh gen, solve, verify, validate}``.

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 an acceptance window was missed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .config import ConfigError, RunConfig
from .dg import DGError, TimePartition
from .experiments import (DT_NOTE, combined_study, space_study, stability_study, time_study,
                          validation_study)
from .linalg import LinAlgError
from .mesh import (MeshError, MeshQualityWarning, generate_structured, generate_voronoi_lloyd,
                   read_mesh, write_mesh)
from .norms import (CONVERGENCE_COLUMNS, RateError, energy_norm, final_time_error,
                    write_convergence_csv, write_plot_data)
from .problems import PROBLEMS
from .quadrature import QuadratureError
from .solvers import SolverError, solve_vemdg
from .vem import VemError, VemSpace

log = logging.getLogger("vemdg")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_WINDOW = 0, 2, 3, 4
SOLVER_ERRORS = (DGError, LinAlgError, SolverError, VemError, QuadratureError)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return v


def _write_rows(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c, "")) for c in columns])


class Manifest:
    def __init__(self, command: str, cfg: RunConfig | None):
        self.data = {
            "command": command,
            "package_version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "config": "config.yaml" if cfg is not None else None,
            "stages": {},
            "notes": [],
        }
        self._t = time.perf_counter()

    def stage(self, name: str) -> None:
        now = time.perf_counter()
        self.data["stages"][name] = round(now - self._t, 3)
        self._t = now

    def note(self, text: str) -> None:
        if text not in self.data["notes"]:
            self.data["notes"].append(text)

    def write(self, out: Path) -> None:
        (out / "manifest.json").write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------- mesh

def cmd_mesh_gen(args) -> int:
    box = tuple(args.box)
    if args.type == "grid":
        nx = args.nx or args.n
        ny = args.ny or args.n
        if not nx or not ny:
            raise ConfigError("grid meshes need --n or --nx/--ny")
        mesh = generate_structured(nx, ny, box)
    else:
        if not args.n:
            raise ConfigError("voronoi meshes need --n")
        mesh = generate_voronoi_lloyd(args.n, box, args.seed, args.lloyd_iters)
    write_mesh(mesh, args.out)
    print(f"{args.out}: {mesh.n_cells} cells, {mesh.n_vertices} vertices, {mesh.n_edges} edges, "
          f"h = {mesh.h:.6g}")
    return EXIT_OK


def build_mesh(cfg: RunConfig):
    m = cfg["mesh"]
    if m["type"] == "file":
        return read_mesh(m["file"])
    if m["type"] == "grid":
        return generate_structured(m["nx"], m["ny"])
    return generate_voronoi_lloyd(m["n_cells"], seed=cfg["seed"], lloyd_iters=m["lloyd_iters"])


def build_problem(cfg: RunConfig):
    kwargs = {"T": cfg["T"]}
    if cfg["nu"] is not None:
        kwargs["nu"] = cfg["nu"]
    return PROBLEMS[cfg["problem"]](**kwargs)


# -------------------------------------------------------------------- solve

def cmd_solve(cfg: RunConfig, out: Path, manifest: Manifest) -> int:
    pr = build_problem(cfg)
    mesh = build_mesh(cfg)
    manifest.stage("mesh")
    space = VemSpace(mesh, cfg["k"])
    manifest.stage("assembly")
    t = cfg["time"]
    try:
        part = TimePartition.from_step(pr.T, t["dt"], t["r"])
    except DGError as exc:
        raise ConfigError(str(exc)) from None
    if t["r"] == 1:
        manifest.note("r=1 lies outside the range covered by the error analysis (r >= 2)")
    sol = solve_vemdg(pr, space, cfg["k"], part, kind=t["basis"], solver=cfg["solver"])
    manifest.stage("solve")

    rdt = cfg["output"]["receiver_dt"] or t["dt"] / 4
    times = np.arange(int(round(pr.T / rdt)) + 1) * rdt
    cols = ["t"] + [f"u({x:g},{y:g})" for x, y in cfg["receivers"]]
    hist = [sol.history(tuple(x), times) for x in cfg["receivers"]]
    _write_rows(out / "receivers.csv", cols,
                [dict(zip(cols, [tt] + [h[i] for h in hist])) for i, tt in enumerate(times)])

    eb = energy_norm(sol, space.M, space.A, pr.nu)
    d = eb.as_dict()
    _write_rows(out / "energy.csv", ["term", "value"], [{"term": k, "value": v} for k, v in d.items()])

    if cfg["output"]["snapshots"]:
        rows = []
        for n in range(part.n_slabs):
            end = sol.end_value(n)
            for j, v in enumerate(end):
                rows.append({"slab": n, "t": float(part.breaks[n + 1]), "dof": j, "value": v})
        _write_rows(out / "snapshots.csv", ["slab", "t", "dof", "value"], rows)

    for ft in cfg["output"]["field_times"]:
        U = sol.value(float(ft))
        with open(out / f"field_t{float(ft):.6g}.txt", "w") as fh:
            fh.write("# cell pi0_coefficients (scaled monomials, degree-ordered)\n")
            for c in range(mesh.n_cells):
                coef = space.pi_zero_coefficients(U, c)
                fh.write(f"{c} " + " ".join(f"{v:.17g}" for v in coef) + "\n")

    print(f"energy norm {eb.norm:.10e}")
    if pr.exact is not None and pr.exact_t is not None:
        fe = final_time_error(sol, pr.exact, pr.exact_t)
        _write_rows(out / "error.csv", ["error_H1", "error_L2", "error_energy"],
                    [{"error_H1": fe.h1, "error_L2": fe.l2, "error_energy": fe.energy}])
        print(f"final-time error: H1 {fe.h1:.10e}  L2 {fe.l2:.10e}  energy {fe.energy:.10e}")
    manifest.stage("export")
    return EXIT_OK


# ------------------------------------------------------------------- verify

def _study_tables(out: Path, res) -> None:
    final_rows, hist_rows = [], []
    for row in res.rows:
        final_rows.append({c: row.get(c, "") for c in CONVERGENCE_COLUMNS})
        if "hist_energy" in row:
            hist_rows.append(dict(row, error_H1=row["hist_H1"], error_L2=row["hist_L2"],
                                  error_energy=row["hist_energy"]))
    param = "dt" if res.name == "time" else "h"
    for rows, tag, key in ((final_rows, "final", "error_energy"), (hist_rows, "history", "error_energy")):
        if not rows:
            continue
        groups = {}
        for row in rows:
            groups.setdefault((row["k"], row["r"]), []).append(row)
        merged = []
        for (k, r), block in groups.items():
            for i, row in enumerate(block):
                row = dict(row, level=i, slope="")
                if i:
                    a = block[i - 1]
                    row["slope"] = float(np.log(a[key] / row[key]) / np.log(a[param] / row[param]))
                merged.append(row)
            write_plot_data(out / f"{res.name}_{tag}_k{k}_r{r}.dat",
                            [b[param] for b in block], [b[key] for b in block])
        write_convergence_csv(out / f"{res.name}_{tag}.csv", merged)


def cmd_verify(cfg: RunConfig, out: Path, manifest: Manifest) -> int:
    v = cfg["verify"]
    jobs, seed, solver = cfg["jobs"], cfg["seed"], cfg["solver"]
    nu = 1.0 if cfg["nu"] is None else cfg["nu"]
    checks, ok = [], True
    for name in v["studies"]:
        if name == "time":
            s = v["time"]
            res = time_study(s["k"], s["n_cells"], tuple(s["rs"]), tuple(s["n_slabs"]), nu, seed,
                             jobs, solver)
            if 1 in s["rs"]:
                manifest.note("time study: r=1 lies outside the analysed range and is not gated")
        elif name == "space":
            s = v["space"]
            r = 6 if v["paper_exact"] else s["r"]
            res = space_study(tuple(s["ks"]), tuple(s["cells"]), s["dt"], r, nu, seed, jobs, solver)
            manifest.note(DT_NOTE)
        elif name == "combined":
            s = v["combined"]
            res = combined_study(tuple(s["ks"]), tuple(s["cells"]), tuple(s["n_slabs"]), nu, seed,
                                 jobs, solver)
            manifest.note("combined study: k=1 (r=1) is reported, not gated")
        else:
            res = stability_study(nu=nu, seed=seed, solver=solver)
            _write_rows(out / "stability.csv", ["level", "dt", "k", "r", "energy", "data", "ratio"],
                        res.rows)
            spread_ok = res.extra["spread"] < 2.0 and res.extra["growth"] <= 1e-12
            ok &= spread_ok
            print(f"stability: ratio spread {res.extra['spread']:.4f}, "
                  f"max relative growth {res.extra['growth']:.2e} -> {'ok' if spread_ok else 'MISS'}")
            manifest.stage(name)
            continue
        _study_tables(out, res)
        for c in res.checks:
            checks.append(c.row())
            mark = ("ok" if c.passed else "MISS") if c.gated else "report"
            print(f"{c.study:9s} {c.label:10s} {c.measure:8s} slope {c.slope:8.4f}  "
                  f"window [{c.lo:g}, {c.hi:g}]  {mark}")
        ok &= res.passed
        manifest.stage(name)
    if checks:
        _write_rows(out / "slopes.csv", ["study", "label", "measure", "slope", "lo", "hi", "gated",
                                         "passed"], checks)
    return EXIT_OK if ok else EXIT_WINDOW


# ----------------------------------------------------------------- validate

def cmd_validate(cfg: RunConfig, out: Path, manifest: Manifest) -> int:
    v = cfg["validate"]
    res = validation_study(v["mode"], v["k"], v["r"], v["dg_dt"], tuple(v["newmark_dts"]),
                           tuple(v["receiver"]), self_check=v["self_check"], seed=cfg["seed"],
                           n_cells=v["n_cells"], ref_dt=v["ref_dt"], solver=cfg["solver"])
    manifest.stage("runs")
    manifest.note("non-dissipative case (nu=0) lies outside the analysed setting")
    for name, (t, u) in res.extra["histories"].items():
        _write_rows(out / f"receiver_{name}.csv", ["t", "u"],
                    [{"t": a, "u": b} for a, b in zip(t, u)])
        write_plot_data(out / f"receiver_{name}.dat", t, u)
    _write_rows(out / "validation_errors.csv", ["method", "dt", "r", "l2_error"], res.rows)
    for row in res.rows:
        print(f"{row['method']:8s} dt={row['dt']:.6g}  receiver L2 error {row['l2_error']:.6e}")
    ok = res.extra["dg_beats_newmark"] and res.extra["newmark_decreasing"]
    if "reference_self_change" in res.extra:
        change = res.extra["reference_self_change"]
        print(f"reference change under halved dt: {change:.3e} (relative L2)")
        ok &= change < 0.01
    print("validation:", "ok" if ok else "MISS")
    return EXIT_OK if ok else EXIT_WINDOW


# ------------------------------------------------------------------ parsing

def _parse_set(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        out[key.strip()] = yaml.safe_load(val)
    return out


def _add_run_options(p):
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--problem", choices=sorted(PROBLEMS))
    p.add_argument("--k", type=int)
    p.add_argument("--r", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--nu", type=float)
    p.add_argument("--mesh-type", choices=["grid", "voronoi", "file"])
    p.add_argument("--n-cells", type=int)
    p.add_argument("--mesh-file")
    p.add_argument("--seed", type=int)
    p.add_argument("--solver", choices=["auto", "dense", "kronecker"])
    p.add_argument("--jobs", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config entry, e.g. --set verify.studies=[time]")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vemdg", description="VEM-DG solver for the damped wave equation")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    mesh = sub.add_parser("mesh", help="mesh utilities")
    msub = mesh.add_subparsers(dest="mesh_command", required=True)
    gen = msub.add_parser("gen", help="generate a mesh file")
    gen.add_argument("--type", choices=["grid", "voronoi"], required=True)
    gen.add_argument("--n", type=int, help="cells (voronoi) or cells per side (grid)")
    gen.add_argument("--nx", type=int)
    gen.add_argument("--ny", type=int)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--lloyd-iters", type=int, default=50)
    gen.add_argument("--box", type=float, nargs=4, default=[0.0, 0.0, 1.0, 1.0],
                     metavar=("X0", "Y0", "X1", "Y1"))
    gen.add_argument("--out", required=True)

    for name, text in (("solve", "solve one configured problem"),
                       ("verify", "manufactured-solution convergence studies"),
                       ("validate", "impulse test: DG against Newmark and an overkill reference")):
        _add_run_options(sub.add_parser(name, help=text))
    sub.choices["verify"].add_argument("--study", action="append",
                                       choices=["time", "space", "combined", "stability"])
    sub.choices["verify"].add_argument("--paper-exact", action="store_true", default=None,
                                       help="time degree 6 in the space study")
    sub.choices["validate"].add_argument("--mode", choices=["reduced", "full"])
    return ap


def _overrides(args) -> dict:
    o = {
        "output.dir": args.out, "problem": args.problem, "k": args.k, "time.r": args.r,
        "time.dt": args.dt, "T": args.T, "nu": args.nu, "mesh.type": args.mesh_type,
        "mesh.n_cells": args.n_cells, "mesh.file": args.mesh_file, "seed": args.seed,
        "solver": args.solver, "jobs": args.jobs,
    }
    if getattr(args, "study", None):
        o["verify.studies"] = args.study
    if getattr(args, "paper_exact", None):
        o["verify.paper_exact"] = True
    if getattr(args, "mode", None):
        o["validate.mode"] = args.mode
    o.update(_parse_set(args.set))
    return o


def main(argv=None) -> int:
    ap = make_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore", MeshQualityWarning)
    try:
        if args.command == "mesh":
            return cmd_mesh_gen(args)
        cfg = RunConfig.load(args.config, _overrides(args))
        out = Path(cfg["output"]["dir"])
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {out}: {exc}") from None
        cfg.dump(out / "config.yaml")
        manifest = Manifest(args.command, cfg)
        handler = {"solve": cmd_solve, "verify": cmd_verify, "validate": cmd_validate}[args.command]
        try:
            code = handler(cfg, out, manifest)
        finally:
            manifest.write(out)
        return code
    except (ConfigError, RateError, MeshError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SOLVER_ERRORS as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
