"""Command line driver.

    egflow run --case cavity --ra 1e4 --n 64 --out results/cavity
    egflow run --case convergence --levels 4 --re 10000 --method both
    egflow run --case pore --re 10 --ri 1
    egflow run --case custom --config run.cfg

Options resolve in three layers: per-case defaults, then a flat key=value
config file (# starts a comment), then command line flags.  --dry-run
prints the resolved configuration and exits.  Every run writes delimited
tables, a text summary, VTK snapshots, and rendered figures into --out.
"""

import argparse
import os
import sys

import numpy as np

from .mesh import read_mesh
from .solvers import PicardConfig, simulate
from .problems import cavity_problem, channel_problem, pore_problem
from . import bench, report

CASES = ("cavity", "convergence", "pore", "custom")

DEFAULTS = {
    "cavity": {"ra": 1e3, "re": 1.408, "pr": 0.71, "n": 64, "dt": 0.01,
               "tf": 1.0, "method": "pr"},
    "convergence": {"re": 1.0, "levels": 4, "variant": "poly", "dt": 0.1,
                    "tf": 1.0, "method": "both", "distortion": 0.25},
    "pore": {"re": 10.0, "ri": 1.0, "pr": 1.0, "n": 48, "dt": 0.05, "tf": 2.0,
             "method": "pr", "stabilization_c": 0.1, "anderson_m": 10},
    "custom": {"re": 10.0, "ri": 0.0, "pr": 1.0, "dt": 0.05, "tf": 1.0,
               "method": "pr", "stabilization_c": 0.1, "anderson_m": 10},
}

COMMON = {"ri": 0.0, "tol": 1e-8, "max_iters": 100, "anderson_m": 0,
          "save_every": 0, "mesh": "", "out": ""}

_TYPES = {"n": int, "levels": int, "max_iters": int, "anderson_m": int,
          "save_every": int, "method": str, "variant": str, "mesh": str,
          "out": str, "case": str}


def parse_config(path):
    """Flat key=value file with # comments."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError("%s:%d: expected key=value" % (path, lineno))
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def resolve(args):
    """Merge defaults, config file, and flags into one plain dict."""
    file_cfg = parse_config(args.config) if args.config else {}
    case = args.case or file_cfg.get("case")
    if case not in CASES:
        raise ValueError("case must be one of %s" % (CASES,))
    cfg = dict(COMMON)
    cfg.update(DEFAULTS[case])
    cfg["case"] = case
    for key, value in file_cfg.items():
        if key == "case":
            continue
        cfg[key] = _TYPES.get(key, float)(value)
    for key in ("ra", "re", "ri", "pr", "n", "levels", "dt", "tf", "method",
                "mesh", "out"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if not cfg["out"]:
        cfg["out"] = os.path.join("results", case)
    if cfg["method"] not in ("st", "pr", "both"):
        raise ValueError("method must be st, pr, or both")
    return cfg


def _picard(cfg):
    m = int(cfg.get("anderson_m", 0))
    if m > 0:
        return PicardConfig(tol=cfg["tol"], max_iters=int(cfg["max_iters"]),
                            mode="anderson", m=m)
    return PicardConfig(tol=cfg["tol"], max_iters=int(cfg["max_iters"]))


def _methods(cfg):
    return ("st", "pr") if cfg["method"] == "both" else (cfg["method"],)


def _iteration_rows(records):
    return [(r["t"], r["iterations"], r["residuals"][-1]) for r in records]


def _snapshotter(cfg, out, tag, asm, inner=None):
    """Step callback writing a VTK snapshot every save_every steps."""
    every = int(cfg["save_every"])
    rec = asm.reconstruction if asm.cfg.use_reconstruction else None
    count = [0]

    def on_step(state, info):
        count[0] += 1
        if every > 0 and count[0] % every == 0:
            report.write_vtk(
                os.path.join(out, "fields_%s_%04d.vtk" % (tag, count[0])),
                asm.space, state, reconstruction=rec,
            )
        if inner is not None:
            inner(state, info)

    return on_step


def run_cavity_case(cfg, out):
    lines = []
    n_steps = int(round(cfg["tf"] / cfg["dt"]))
    for method in _methods(cfg):
        asm, state0 = cavity_problem(
            int(cfg["n"]), Ra=cfg["ra"], Re=cfg["re"], Pr=cfg["pr"],
            dt=cfg["dt"], use_reconstruction=(method == "pr"),
        )
        tag = method
        state, records = simulate(asm, state0, n_steps, _picard(cfg),
                                  on_step=_snapshotter(cfg, out, tag, asm))
        quants = bench.cavity_quantities(asm.space, state)
        report.write_csv(
            os.path.join(out, "quantities_%s.csv" % tag),
            ["Ra", "n", "u_max", "y_at_u_max", "v_max", "x_at_v_max", "nusselt"],
            [(cfg["ra"], int(cfg["n"]), quants["u_max"], quants["y_at_u_max"],
              quants["v_max"], quants["x_at_v_max"], quants["nusselt"])],
        )
        report.write_csv(
            os.path.join(out, "iterations_%s.csv" % tag),
            ["t", "iterations", "last_increment"],
            _iteration_rows(records),
        )
        report.write_vtk(
            os.path.join(out, "fields_%s_%04d.vtk" % (tag, n_steps)),
            asm.space, state,
            reconstruction=asm.reconstruction if method == "pr" else None,
        )
        report.save_cavity_figure(os.path.join(out, "cavity_%s.png" % tag),
                                  asm.space, state)
        report.save_iterations_figure(
            os.path.join(out, "iterations_%s.png" % tag), records, tag)
        lines += [
            "case cavity method=%s Ra=%g n=%d dt=%g tf=%g" % (
                tag, cfg["ra"], int(cfg["n"]), cfg["dt"], cfg["tf"]),
            "  u_max   = %.12g at y = %.12g" % (quants["u_max"],
                                                quants["y_at_u_max"]),
            "  v_max   = %.12g at x = %.12g" % (quants["v_max"],
                                                quants["x_at_v_max"]),
            "  nusselt = %.12g" % quants["nusselt"],
        ]
    report.write_summary(os.path.join(out, "summary.txt"), lines)
    return lines


def run_convergence_case(cfg, out):
    levels = [8 * 2 ** k for k in range(int(cfg["levels"]))]
    tables = {}
    lines = []
    rows_out = []
    for method in _methods(cfg):
        rows = bench.run_convergence(
            cfg["variant"], levels=levels, Re=cfg["re"], dt=cfg["dt"],
            t_f=cfg["tf"], use_reconstruction=(method == "pr"),
            distortion=cfg["distortion"], picard=_picard(cfg),
        )
        tables[method] = rows
        lines.append("case convergence variant=%s method=%s Re=%g" % (
            cfg["variant"], method, cfg["re"]))
        for r in rows:
            rows_out.append((method, r["n"], r["h"], r["velocity_error"],
                             r["velocity_rate"], r["pressure_error"],
                             r["pressure_rate"]))
            lines.append(
                "  n=%3d  |u-uh| = %.12g (rate %.2f)  |p-ph| = %.12g (rate %.2f)"
                % (r["n"], r["velocity_error"], r["velocity_rate"],
                   r["pressure_error"], r["pressure_rate"]))
    report.write_csv(
        os.path.join(out, "errors.csv"),
        ["method", "n", "h", "velocity_error", "velocity_rate",
         "pressure_error", "pressure_rate"],
        rows_out,
    )
    report.write_csv(
        os.path.join(out, "rates.csv"),
        ["method", "n", "velocity_rate", "pressure_rate"],
        [(m, r["n"], r["velocity_rate"], r["pressure_rate"])
         for m, rows in tables.items() for r in rows[1:]],
    )
    report.save_convergence_figure(os.path.join(out, "convergence.png"), tables)
    report.write_summary(os.path.join(out, "summary.txt"), lines)
    return lines


def _run_channel(cfg, out, asm_factory):
    lines = []
    for method in _methods(cfg):
        asm, state0 = asm_factory(method)
        series = []

        def on_step(state, info, series=series, asm=asm):
            series.append({
                "t": info["t"],
                "flux": bench.convective_heat_flux(
                    asm.space, state[0], state[2], "right"),
                "iterations": info["iterations"],
            })

        n_steps = int(round(cfg["tf"] / cfg["dt"]))
        state, records = simulate(
            asm, state0, n_steps, _picard(cfg),
            on_step=_snapshotter(cfg, out, method, asm, inner=on_step),
        )
        tag = method
        report.write_csv(
            os.path.join(out, "flux_%s.csv" % tag),
            ["t", "flux", "iterations"],
            [(s["t"], s["flux"], s["iterations"]) for s in series],
        )
        report.write_csv(
            os.path.join(out, "iterations_%s.csv" % tag),
            ["t", "iterations", "last_increment"],
            _iteration_rows(records),
        )
        report.write_vtk(
            os.path.join(out, "fields_%s_%04d.vtk" % (tag, n_steps)),
            asm.space, state,
            reconstruction=asm.reconstruction if method == "pr" else None,
        )
        report.save_flux_figure(os.path.join(out, "flux_%s.png" % tag),
                                {tag: series})
        lines += [
            "case %s method=%s Re=%g Ri=%g dt=%g tf=%g" % (
                cfg["case"], tag, cfg["re"], cfg["ri"], cfg["dt"], cfg["tf"]),
            "  outflow flux at t=%g: %.12g" % (series[-1]["t"],
                                               series[-1]["flux"]),
        ]
    report.write_summary(os.path.join(out, "summary.txt"), lines)
    return lines


def run_pore_case(cfg, out):
    def factory(method):
        return pore_problem(
            Re=cfg["re"], Ri=cfg["ri"], n=int(cfg["n"]), dt=cfg["dt"],
            Pr=cfg["pr"], use_reconstruction=(method == "pr"),
            stabilization_c=cfg["stabilization_c"],
        )

    return _run_channel(cfg, out, factory)


def run_custom_case(cfg, out):
    if not cfg["mesh"]:
        raise ValueError("custom case needs mesh=PATH in the config")
    mesh = read_mesh(cfg["mesh"])

    def factory(method):
        return channel_problem(
            mesh, Re=cfg["re"], Ri=cfg["ri"], dt=cfg["dt"], Pr=cfg["pr"],
            use_reconstruction=(method == "pr"),
            stabilization_c=cfg["stabilization_c"],
        )

    return _run_channel(cfg, out, factory)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="egflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a benchmark case")
    run.add_argument("--case", choices=CASES)
    run.add_argument("--config", help="flat key=value configuration file")
    run.add_argument("--ra", type=float, help="Rayleigh number (cavity)")
    run.add_argument("--re", type=float, help="Reynolds number")
    run.add_argument("--ri", type=float, help="Richardson number")
    run.add_argument("--pr", type=float, help="Prandtl number")
    run.add_argument("--n", type=int, help="cells per side")
    run.add_argument("--levels", type=int, help="refinement levels")
    run.add_argument("--method", choices=("st", "pr", "both"),
                     help="standard, pressure-robust, or both")
    run.add_argument("--dt", type=float, help="time step")
    run.add_argument("--tf", type=float, help="final time")
    run.add_argument("--mesh", help="mesh file (custom case)")
    run.add_argument("--out", help="output directory")
    run.add_argument("--dry-run", action="store_true",
                     help="print the resolved configuration and exit")
    args = parser.parse_args(argv)

    try:
        cfg = resolve(args)
    except (ValueError, OSError) as err:
        parser.error(str(err))
    if args.dry_run:
        for key in sorted(cfg):
            print("%s=%s" % (key, cfg[key]))
        return 0

    os.makedirs(cfg["out"], exist_ok=True)
    runners = {
        "cavity": run_cavity_case,
        "convergence": run_convergence_case,
        "pore": run_pore_case,
        "custom": run_custom_case,
    }
    lines = runners[cfg["case"]](cfg, cfg["out"])
    for line in lines:
        print(line)
    print("wrote %s" % cfg["out"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
