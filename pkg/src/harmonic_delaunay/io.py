"""CSV and report emitters.

Floats are written with 17 significant digits so every file round-trips
exactly.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

__all__ = [
    "read_csv",
    "write_cells",
    "write_deformed",
    "write_edges",
    "write_field",
    "write_report",
    "write_surface",
    "write_trace",
    "write_walk",
]

_AXES = ("x", "y")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _write(path, header, rows, comment=None):
    path = Path(path)
    with path.open("w", encoding="ascii", newline="\n") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    """Header and float table of a CSV written by this module (``#`` lines skipped)."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: empty file")
    header = lines[0].split(",")
    try:
        data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: malformed row ({exc})") from None
    if data.size == 0:
        data = np.empty((0, len(header)))
    if data.shape[1] != len(header):
        raise ValueError(f"{path}: expected {len(header)} columns")
    return header, data


def write_edges(graph, path):
    d = graph.d
    header = ["i", "j"] + [f"d{a}" for a in _AXES[:d]] + ["facet"] + [f"facet_u{u + 1}" for u in range(d)]
    facet = graph.facet if graph.facet is not None else np.full(graph.n_edges, np.nan)
    facet_u = graph.facet_u if graph.facet_u is not None else np.full((graph.n_edges, d), np.nan)
    rows = (
        [int(i), int(j), *disp, f, *fu]
        for (i, j), disp, f, fu in zip(graph.edges, graph.disp, facet, facet_u)
    )
    return _write(path, header, rows)


def write_cells(graph, path):
    """Vertex id, cell volume, perimeter and polygon corners ``x y;x y;...``."""
    path = Path(path)
    with path.open("w", encoding="ascii", newline="\n") as fh:
        fh.write("vertex,volume,perimeter,polygon\n")
        if graph.cell_volume is None:
            return path
        for s in range(graph.n):
            cell = graph.cells[s] if graph.cells is not None else np.empty((0, graph.d))
            poly = ";".join(" ".join(_fmt(c) for c in np.atleast_1d(p)) for p in np.atleast_2d(cell))
            fh.write(f"{s},{_fmt(graph.cell_volume[s])},{_fmt(graph.cell_perimeter[s])},{poly}\n")
    return path


def write_surface(eta, path):
    h = eta.heights
    return _write(path, ["vertex", "psi", "height"], ([s, eta.psi[s], h[s]] for s in range(eta.graph.n)),
                  comment="tilt " + " ".join(_fmt(c) for c in eta.tilt))


def write_field(field, path):
    g = field.graph
    if field.antisymmetric:
        rows = ([int(i), int(j), v] for (i, j), v in zip(g.edges, field.values))
        note = "antisymmetric field; value is zeta(i, j) with i < j, zeta(j, i) = -value"
    else:
        rows = ([int(i), int(j), v] for i, j, v in zip(g.dir_src, g.indices, field.values))
        note = "directed field; one row per ordered pair (i, j)"
    return _write(path, ["i", "j", "value"], rows, comment=note)


def write_trace(checkpoints, d, path):
    header = ["event", "t", "energy", "max_laplacian_abs"] + [f"tilt_u{u + 1}" for u in range(d)]
    rows = ([c["event"], c["t"], c["energy"], c["max_laplacian_abs"], *c.get("tilt", [np.nan] * d)]
            for c in checkpoints)
    return _write(path, header, rows)


def write_deformed(deformed, path):
    g = deformed.graph
    d = g.d
    H = deformed.H
    header = ["vertex"] + list(_AXES[:d]) + [f"H{a}" for a in _AXES[:d]] + [f"chi{a}" for a in _AXES[:d]]
    rows = ([s, *g.positions[s], *H[s], *deformed.chi[s]] for s in range(g.n))
    return _write(path, header, rows)


def write_walk(trace, path):
    d = trace.unwrapped.shape[1]
    header = ["t", "vertex"] + [f"{a}_unwrapped" for a in _AXES[:d]]
    rows = ([t, int(v), *x] for t, v, x in zip(trace.times, trace.vertices, trace.unwrapped))
    return _write(path, header, rows)


def _flatten(obj, prefix=""):
    out = {}
    if isinstance(obj, dict):
        for k, v in obj.items():
            out.update(_flatten(v, f"{prefix}{k}."))
    elif isinstance(obj, (list, tuple, np.ndarray)):
        arr = list(np.asarray(obj).ravel()) if isinstance(obj, np.ndarray) else list(obj)
        if all(not isinstance(v, (dict, list, tuple)) for v in arr):
            out[prefix.rstrip(".")] = " ".join(_scalar(v) for v in arr)
        else:
            for i, v in enumerate(arr):
                out.update(_flatten(v, f"{prefix}{i}."))
    else:
        out[prefix.rstrip(".")] = _scalar(obj)
    return out


def _scalar(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return _fmt(v)
    return str(v)


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def format_report(report: dict) -> str:
    """Flat ``key=value`` lines."""
    return "".join(f"{k}={v}\n" for k, v in _flatten(report).items())


def write_report(report: dict, stem):
    """Write ``<stem>.txt`` (key=value) and ``<stem>.json``."""
    stem = Path(stem)
    stem.with_suffix(".txt").write_text(format_report(report))
    stem.with_suffix(".json").write_text(json.dumps(to_jsonable(report), indent=2, sort_keys=True) + "\n")
    return stem
