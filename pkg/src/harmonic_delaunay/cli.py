"""Command-line interface.

Every command reads an optional JSON config (``--config``), applies flag
overrides, fills the remaining defaults and records the fully resolved
configuration in ``run.json`` inside the output directory.  Passing that
file back as ``--config`` (or using ``replay``) reproduces the run.

Exit codes: 0 success, 2 configuration error, 3 numerical non-convergence,
4 I/O error.  Outputs are written to a temporary directory that is renamed
into place only on success.
"""
from __future__ import annotations

import argparse
import json
import shutil
import sys
import tempfile
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from . import io as hio
from . import render
from .fields import Surface, tilt_J
from .geometry import GeometryError, assumption_diagnostics, build_delaunay
from .harness import HarnessError, harness_run
from .pointprocess import GENERATOR_ID, PointSetError, load_points, sample_poisson, save_points
from .randomwalk import environment_check, martingale_residual, moment_check, msd_diagnostic, walk
from .solver import NotConvergedError, SolverError, corrector, deform, non_delaunay_edges, \
    solve_harmonic, sublinearity_scan

EXIT_OK, EXIT_CONFIG, EXIT_NOCONV, EXIT_IO = 0, 2, 3, 4

COMMANDS = ("sample", "triangulate", "harness", "solve", "deform", "walk", "diagnostics", "render",
            "pipeline")

DEFAULTS = {
    "d": 2,
    "L": 20.0,
    "lam": 1.0,
    "seed": 0,
    "palm": False,
    "points": None,
    "tilt": None,
    "t_max": 50.0,
    "checkpoint_every": 1000,
    "stop_tol": None,
    "tol": 1e-10,
    "method": "cg",
    "max_iter": 1_000_000,
    "harness": True,
    "start": 0,
    "walk_t_max": 10.0,
    "clock": "jump-rate",
    "n_walks": 500,
    "msd_t_max": 20.0,
    "env_steps": 100_000,
    "moment_walks": 10_000,
    "beta": 0.1,
    "r": 4.5,
    "levels": None,
    "kind": "all",
    "input": None,
    "backend": None,
}

KINDS = ("triangulation", "voronoi", "level-curves", "overlay", "all")


class ConfigError(ValueError):
    pass


def validate(cfg: dict) -> dict:
    """Check types and ranges; returns the config with normalised values."""
    unknown = sorted(set(cfg) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
    c = dict(DEFAULTS, **cfg)

    def num(name, positive=True, integer=False):
        v = c[name]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{name} must be a number")
        if integer and int(v) != v:
            raise ConfigError(f"{name} must be an integer")
        if positive and not v > 0:
            raise ConfigError(f"{name} must be > 0")
        c[name] = int(v) if integer else float(v)

    if c["d"] not in (1, 2):
        raise ConfigError("d must be 1 or 2")
    for name in ("L", "lam", "t_max", "tol", "walk_t_max", "msd_t_max", "r"):
        num(name)
    num("beta", positive=False)
    for name in ("checkpoint_every", "max_iter", "n_walks", "env_steps", "moment_walks"):
        num(name, integer=True)
    num("seed", positive=False, integer=True)
    num("start", positive=False, integer=True)
    if c["seed"] < 0:
        raise ConfigError("seed must be >= 0")
    if c["n_walks"] < 100:
        raise ConfigError("n_walks must be >= 100")
    if c["stop_tol"] is not None:
        num("stop_tol")
    if c["method"] not in ("cg", "relax"):
        raise ConfigError("method must be 'cg' or 'relax'")
    if c["clock"] not in ("jump-rate", "uniformized"):
        raise ConfigError("clock must be 'jump-rate' or 'uniformized'")
    if c["kind"] not in KINDS:
        raise ConfigError(f"kind must be one of {', '.join(KINDS)}")
    if c["backend"] not in (None, "cython", "python"):
        raise ConfigError("backend must be 'cython' or 'python'")
    tilt = c["tilt"]
    if tilt is None:
        tilt = [1.0] + [0.0] * (c["d"] - 1)
    if not isinstance(tilt, (list, tuple)) or len(tilt) != c["d"]:
        raise ConfigError(f"tilt must be a list of {c['d']} numbers")
    try:
        c["tilt"] = [float(v) for v in tilt]
    except (TypeError, ValueError):
        raise ConfigError(f"tilt must be a list of {c['d']} numbers") from None
    if c["levels"] is not None:
        try:
            c["levels"] = [float(v) for v in c["levels"]]
        except (TypeError, ValueError):
            raise ConfigError("levels must be a list of numbers") from None
    c["palm"] = bool(c["palm"])
    c["harness"] = bool(c["harness"])
    return c


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="harmonic-delaunay",
                                description="Harmonic deformation of periodic Delaunay triangulations.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config or run.json sidecar")
        sp.add_argument("--out", "-o", help="output directory")
        sp.add_argument("--force", action="store_true", help="replace an existing output directory")
        sp.add_argument("--demo", action="store_true", help="start from the shipped demo config")
        g = sp.add_argument_group("overrides")
        g.add_argument("--d", type=int)
        g.add_argument("--L", type=float)
        g.add_argument("--lam", type=float)
        g.add_argument("--seed", type=int)
        g.add_argument("--palm", action="store_true", default=None)
        g.add_argument("--points")
        g.add_argument("--tilt", type=float, nargs="+")
        g.add_argument("--t-max", dest="t_max", type=float)
        g.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
        g.add_argument("--stop-tol", dest="stop_tol", type=float)
        g.add_argument("--tol", type=float)
        g.add_argument("--method", choices=("cg", "relax"))
        g.add_argument("--max-iter", dest="max_iter", type=int)
        g.add_argument("--no-harness", dest="harness", action="store_false", default=None)
        g.add_argument("--start", type=int)
        g.add_argument("--walk-t-max", dest="walk_t_max", type=float)
        g.add_argument("--clock", choices=("jump-rate", "uniformized"))
        g.add_argument("--n-walks", dest="n_walks", type=int)
        g.add_argument("--env-steps", dest="env_steps", type=int)
        g.add_argument("--levels", type=float, nargs="+")
        g.add_argument("--kind", choices=KINDS)
        g.add_argument("--input", help="run directory to render from")
        g.add_argument("--backend", choices=("cython", "python"))
    rp = sub.add_parser("replay", help="re-run a command from its run.json")
    rp.add_argument("sidecar")
    rp.add_argument("--out", "-o", required=True)
    rp.add_argument("--force", action="store_true")
    return p


def demo_config() -> dict:
    return json.loads(resources.files("harmonic_delaunay").joinpath("data/demo.json").read_text())


def _load_config(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if isinstance(data, dict) and "config" in data and "command" in data:
        data = data["config"]
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def resolve(args) -> dict:
    cfg = demo_config() if getattr(args, "demo", False) else {}
    if getattr(args, "config", None):
        cfg.update(_load_config(args.config))
    for key in DEFAULTS:
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    return validate(cfg)


# --- pipeline stages -------------------------------------------------------

def _points(cfg):
    if cfg["points"]:
        ps = load_points(cfg["points"])
    else:
        ps = sample_poisson(cfg["d"], cfg["L"], cfg["lam"], cfg["seed"], cfg["palm"])
    return ps


def _log(msg):
    print(msg, file=sys.stderr)


def _graph(ps):
    g = build_delaunay(ps)
    if not g.is_connected():
        raise GeometryError("triangulation is disconnected")
    return g


def run_sample(cfg, out, report):
    ps = _points(cfg)
    save_points(ps, out / "points.csv")
    report["points"] = {"n": ps.n, "d": ps.d, "L": ps.L}
    return ps


def run_triangulate(cfg, out, report, ps=None):
    ps = ps if ps is not None else run_sample(cfg, out, report)
    g = _graph(ps)
    hio.write_edges(g, out / "edges.csv")
    hio.write_cells(g, out / "cells.csv")
    report["graph"] = {"n_vertices": g.n, "n_edges": g.n_edges, "mean_degree": float(g.degree.mean()),
                       "min_degree": int(g.degree.min()), "dropped_degenerate": g.n_dropped}
    return g


def run_solve(cfg, out, report, g=None):
    g = g if g is not None else run_triangulate(cfg, out, report)
    h, rep = solve_harmonic(g, cfg["tilt"], tol=cfg["tol"], max_iter=cfg["max_iter"], method=cfg["method"],
                            backend=cfg["backend"])
    hio.write_surface(h, out / "surface.csv")
    _, split = corrector(h)
    r = {**rep.as_dict(), **split}
    if g.mode == "periodic":
        r["tilt_J"] = [tilt_J(h, u) for u in range(g.d)]
    if g.d == 2:
        r["sublinearity"] = sublinearity_scan(h)
    report["solve"] = r
    return h


def run_harness(cfg, out, report, g=None):
    g = g if g is not None else run_triangulate(cfg, out, report)
    gamma = Surface.affine(g, cfg["tilt"])
    st = harness_run(g, gamma, cfg["t_max"], cfg["seed"], checkpoint_every=cfg["checkpoint_every"],
                     stop_tol=cfg["stop_tol"], backend=cfg["backend"])
    hio.write_trace(st.checkpoints, g.d, out / "harness_trace.csv")
    hio.write_surface(st.surface, out / "harness_surface.csv")
    trace = st.energy_trace()
    report["harness"] = {
        "n_events": st.n_events,
        "t": st.t,
        "energy_initial": float(trace[0]),
        "energy_final": float(trace[-1]),
        "max_energy_increase": float(np.max(np.diff(trace))) if trace.size > 1 else 0.0,
        "stopped_early": st.stopped_early,
        "backend": st.backend,
    }
    return st


def run_deform(cfg, out, report, g=None):
    g = g if g is not None else run_triangulate(cfg, out, report)
    D = deform(g, tol=cfg["tol"], method=cfg["method"], max_iter=cfg["max_iter"], count_non_delaunay=False)
    hio.write_deformed(D, out / "deformed.csv")
    r = {"barycenter_residual": float(D.barycenter_residual().max()),
         "martingale_residual": martingale_residual(D)}
    cmp_ = None
    if g.d == 2 and g.mode == "periodic":
        cmp_ = non_delaunay_edges(D)
        D.non_delaunay = cmp_["missing"]
        r["non_delaunay_edges"] = cmp_["missing"]
        r["delaunay_only_edges"] = cmp_["extra"]
    report["deform"] = r
    return D, cmp_


def run_walk(cfg, out, report, g=None):
    g = g if g is not None else run_triangulate(cfg, out, report)
    if not 0 <= cfg["start"] < g.n:
        raise ConfigError(f"start must be a vertex index below {g.n}")
    tr = walk(g, cfg["start"], cfg["walk_t_max"], cfg["seed"], cfg["clock"])
    hio.write_walk(tr, out / "walk.csv")
    report["walk"] = {"n_jumps": int(tr.times.shape[0] - 1), "clock": tr.clock, "duration": tr.duration}
    return tr


def run_diagnostics(cfg, out, report, g=None):
    g = g if g is not None else run_triangulate(cfg, out, report)
    r = {}
    if g.mode == "periodic":
        r["assumptions"] = assumption_diagnostics(g, cfg["beta"], cfg["r"])
    env = environment_check(g, g.degree.astype(float), cfg["env_steps"], cfg["seed"], backend=cfg["backend"])
    r["environment"] = env
    gamma = Surface.affine(g, cfg["tilt"])
    mc = moment_check(g, gamma, 2, (1.0, 2.0, 5.0), cfg["moment_walks"], cfg["seed"])
    r["moment"] = mc
    D = deform(g, tol=cfg["tol"], method=cfg["method"], max_iter=cfg["max_iter"], count_non_delaunay=False)
    r["martingale_residual"] = martingale_residual(D)
    msd = msd_diagnostic(D, cfg["n_walks"], cfg["msd_t_max"], cfg["seed"])
    r["msd"] = {k: msd[k] for k in ("slope", "r2", "mean_displacement", "mean_displacement_stderr")}
    report["diagnostics"] = r
    return r


def _read_run(cfg):
    src = Path(cfg["input"])
    if not (src / "points.csv").exists():
        raise OSError(f"{src}: points.csv not found")
    ps = load_points(src / "points.csv")
    g = _graph(ps)
    return src, g


def _load_surface(src, g, name):
    header, data = hio.read_csv(src / name)
    if header != ["vertex", "psi", "height"] or data.shape[0] != g.n:
        raise OSError(f"{src / name}: malformed surface file")
    return data


def _load_deformed(src, g):
    from .solver import DeformedGraph

    header, data = hio.read_csv(src / "deformed.csv")
    if data.shape != (g.n, 1 + 3 * g.d):
        raise OSError(f"{src / 'deformed.csv'}: malformed deformed-points file")
    return DeformedGraph(g, data[:, 1 + 2 * g.d:])


def _render_all(cfg, out, report, g, h=None, D=None, cmp_=None, kinds=("all",)):
    want = set(KINDS[:-1]) if "all" in kinds else set(kinds)
    files = {}
    if g.d != 2:
        report["render"] = {"skipped": "rendering needs d = 2"}
        return files
    if "triangulation" in want:
        files["triangulation"] = render.render_triangulation(g, out / "triangulation.svg", star=0)
        if D is not None:
            files["deformed"] = render.render_triangulation(
                g, out / "deformed.svg", positions=D.H, star=0, title="harmonic deformation")
    if "voronoi" in want and g.cells is not None:
        files["voronoi"] = render.render_voronoi(g, out / "voronoi.svg")
    counts = None
    if "level-curves" in want and h is not None:
        gamma_minus_h = -h.psi
        _, counts = render.render_level_curves(g, gamma_minus_h, out / "level_curves.svg", levels=cfg["levels"],
                                               title="level curves of gamma - h")
    ov = None
    if "overlay" in want and D is not None:
        _, ov = render.render_overlay(D, out / "overlay.svg", comparison=cmp_)
    report["render"] = {
        "files": sorted(p.name for p in out.glob("*.svg")),
        "level_segments": {str(k): v for k, v in (counts or {}).items()},
        "overlay_non_shared": None if ov is None else {"harmonic_only": ov["missing"],
                                                       "delaunay_only": ov["extra"]},
    }
    return files


def run_render(cfg, out, report):
    if not cfg["input"]:
        raise ConfigError("input must name a run directory")
    src, g = _read_run(cfg)
    h = D = None
    if (src / "surface.csv").exists():
        data = _load_surface(src, g, "surface.csv")
        h = Surface(g, np.zeros(g.d), data[:, 1])
    if (src / "deformed.csv").exists():
        D = _load_deformed(src, g)
    return _render_all(cfg, out, report, g, h, D, None, kinds=(cfg["kind"],))


def run_pipeline(cfg, out, report):
    ps = run_sample(cfg, out, report)
    g = run_triangulate(cfg, out, report, ps)
    h = run_solve(cfg, out, report, g)
    if cfg["harness"]:
        run_harness(cfg, out, report, g)
    D, cmp_ = run_deform(cfg, out, report, g)
    _render_all(cfg, out, report, g, h, D, cmp_, kinds=(cfg["kind"],))
    return report


RUNNERS = {
    "sample": run_sample,
    "triangulate": run_triangulate,
    "harness": run_harness,
    "solve": run_solve,
    "deform": run_deform,
    "walk": run_walk,
    "diagnostics": run_diagnostics,
    "render": run_render,
    "pipeline": run_pipeline,
}


def execute(command: str, cfg: dict, out, force: bool = False) -> Path:
    """Run ``command`` and atomically publish its outputs into ``out``."""
    out = Path(out)
    if out.exists() and not force:
        raise FileExistsError(f"output directory {out} exists (use --force)")
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        report = {"command": command}
        t0 = time.perf_counter()
        RUNNERS[command](cfg, tmp, report)
        report["wall_time"] = time.perf_counter() - t0
        hio.write_report(report, tmp / "report")
        sidecar = {"command": command, "config": cfg, "version": __version__, "generator": GENERATOR_ID}
        (tmp / "run.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
        if out.exists():
            shutil.rmtree(out)
        tmp.rename(out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return out


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "replay":
            side = json.loads(Path(args.sidecar).read_text())
            if not isinstance(side, dict) or "command" not in side or "config" not in side:
                raise ConfigError(f"{args.sidecar} is not a run sidecar")
            command, cfg = side["command"], validate(side["config"])
            if command not in RUNNERS:
                raise ConfigError(f"unknown command {command!r} in sidecar")
        else:
            command, cfg = args.command, resolve(args)
        out = args.out or f"{command}-out"
        path = execute(command, cfg, out, args.force)
    except (ConfigError, PointSetError, GeometryError, SolverError, HarnessError) as exc:
        _log(f"config error: {exc}")
        return EXIT_CONFIG
    except NotConvergedError as exc:
        _log(f"not converged: {exc}")
        return EXIT_NOCONV
    except (OSError, json.JSONDecodeError) as exc:
        _log(f"I/O error: {exc}")
        return EXIT_IO
    _log(f"wrote {path}")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
