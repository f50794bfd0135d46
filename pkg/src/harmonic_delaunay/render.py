"""SVG figures: triangulations, Voronoi cells, level curves and overlays.

Every drawing element carries a ``class`` attribute naming its role
(``edge``, ``point``, ``cell``, ``level``, ``level-zero``, ``harmonic``,
``delaunay``, ``origin``) so outputs can be checked by element counts.
"""
from __future__ import annotations

import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np

__all__ = [
    "STYLE",
    "level_segments",
    "render_level_curves",
    "render_overlay",
    "render_triangulation",
    "render_voronoi",
]

SVG_NS = "http://www.w3.org/2000/svg"

STYLE = {
    "edge": "stroke:#333333;stroke-width:0.04;fill:none",
    "point": "fill:#000000",
    "cell": "stroke:#1f5fa8;stroke-width:0.03;fill:none",
    "level": "stroke:#888888;stroke-width:0.04;fill:none",
    "level-zero": "stroke:#d62728;stroke-width:0.12;fill:none",
    "harmonic": "stroke:#e6b800;stroke-width:0.12;fill:none",
    "delaunay": "stroke:#000000;stroke-width:0.06;stroke-dasharray:0.25,0.15;fill:none",
    "origin": "fill:#d62728;stroke:#000000;stroke-width:0.02",
    "frame": "stroke:#bbbbbb;stroke-width:0.03;fill:none",
}


class _Canvas:
    def __init__(self, lo, hi, title, style=None, margin=0.05):
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        span = np.maximum(hi - lo, 1e-9)
        pad = margin * span
        self.lo, self.hi = lo - pad, hi + pad
        w, h = self.hi - self.lo
        self.style = dict(STYLE, **(style or {}))
        self.root = ET.Element("svg", {
            "xmlns": SVG_NS,
            "version": "1.1",
            "viewBox": f"{self.lo[0]:.6g} {-self.hi[1]:.6g} {w:.6g} {h:.6g}",
            "width": "600",
            "height": f"{600 * h / w:.0f}",
        })
        ET.SubElement(self.root, "title").text = title
        # y axis points up: flip the whole drawing
        self.g = ET.SubElement(self.root, "g", {"transform": "scale(1,-1)"})
        self.radius = 0.004 * float(max(w, h))

    def line(self, a, b, role):
        ET.SubElement(self.g, "line", {
            "class": role, "style": self.style[role],
            "x1": f"{a[0]:.8g}", "y1": f"{a[1]:.8g}", "x2": f"{b[0]:.8g}", "y2": f"{b[1]:.8g}",
        })

    def point(self, p, role="point"):
        ET.SubElement(self.g, "circle", {
            "class": role, "style": self.style[role],
            "cx": f"{p[0]:.8g}", "cy": f"{p[1]:.8g}", "r": f"{self.radius:.6g}",
        })

    def polygon(self, pts, role):
        ET.SubElement(self.g, "polygon", {
            "class": role, "style": self.style[role],
            "points": " ".join(f"{x:.8g},{y:.8g}" for x, y in pts),
        })

    def star(self, p, role="origin"):
        r = 6 * self.radius
        ang = np.pi / 2 + np.arange(10) * np.pi / 5
        rad = np.where(np.arange(10) % 2 == 0, r, 0.4 * r)
        pts = np.stack([p[0] + rad * np.cos(ang), p[1] + rad * np.sin(ang)], axis=1)
        self.polygon(pts, role)

    def text(self, s, role="caption"):
        t = ET.SubElement(self.root, "text", {
            "class": role, "x": f"{self.lo[0]:.6g}", "y": f"{-self.hi[1] + 0.04 * (self.hi[1] - self.lo[1]):.6g}",
            "style": f"font-size:{0.03 * float(self.hi[1] - self.lo[1]):.4g}px;font-family:sans-serif",
        })
        t.text = s

    def frame(self, L):
        self.polygon([(0, 0), (L, 0), (L, L), (0, L)], "frame")

    def save(self, path):
        path = Path(path)
        ET.ElementTree(self.root).write(path, encoding="utf-8", xml_declaration=True)
        return path


def _bounds(pts, graph):
    if graph.mode == "periodic":
        return np.zeros(2), np.full(2, graph.points.L)
    return pts.min(axis=0), pts.max(axis=0)


def render_triangulation(graph, path, positions=None, star=0, title="Delaunay triangulation",
                         style=None):
    """Points and edges; ``positions`` overrides the vertex coordinates.

    Periodic edges are drawn from ``i`` along their unwrapped displacement,
    so edges crossing the box boundary stick out of the frame.  ``star``
    marks a vertex (``None`` for no marker).
    """
    if graph.d != 2:
        raise ValueError("rendering needs d = 2")
    X = graph.positions if positions is None else np.asarray(positions, dtype=float)
    disp = graph.disp if positions is None else _image_disp(graph, X)
    cv = _Canvas(*_bounds(X, graph), title, style)
    if graph.mode == "periodic":
        cv.frame(graph.points.L)
    for (i, _), dv in zip(graph.edges, disp):
        cv.line(X[i], X[i] + dv, "edge")
    for p in X:
        cv.point(p)
    if star is not None and graph.n:
        cv.star(X[star])
    return cv.save(path)


def _image_disp(graph, X):
    # displacement in the image: original displacement plus change of offset
    P = graph.positions
    i, j = graph.edges[:, 0], graph.edges[:, 1]
    return graph.disp + (X[j] - P[j]) - (X[i] - P[i])


def render_voronoi(graph, path, title="Voronoi tessellation", style=None):
    if graph.d != 2 or graph.cells is None:
        raise ValueError("Voronoi rendering needs a periodic d = 2 graph")
    cv = _Canvas(*_bounds(graph.positions, graph), title, style)
    cv.frame(graph.points.L)
    for cell in graph.cells:
        cv.polygon(cell, "cell")
    for p in graph.positions:
        cv.point(p)
    return cv.save(path)


def level_segments(tri_pos, tri_vals, level):
    """Marching triangles: iso-segments of the piecewise-linear interpolant.

    ``tri_pos`` has shape (m, 3, 2) and ``tri_vals`` (m, 3).  A vertex with
    value ``>= level`` counts as above, so a flat triangle at the level
    yields no segment.
    """
    segs = []
    for P, v in zip(np.asarray(tri_pos, dtype=float), np.asarray(tri_vals, dtype=float)):
        above = v >= level
        if above.all() or not above.any():
            continue
        pts = []
        for a, b in ((0, 1), (1, 2), (2, 0)):
            if above[a] != above[b]:
                t = (level - v[a]) / (v[b] - v[a])
                pts.append(P[a] + t * (P[b] - P[a]))
        segs.append((pts[0], pts[1]))
    return segs


def render_level_curves(graph, values, path, levels=None, n_levels=11, title="level curves",
                        style=None):
    """Iso-lines of a per-vertex scalar, interpolated linearly on triangles.

    The zero level is always drawn and highlighted.  Returns the path and
    the number of segments per level.
    """
    if graph.d != 2 or graph.triangles is None:
        raise ValueError("level curves need a d = 2 triangulation")
    values = np.asarray(values, dtype=float)
    if levels is None:
        lo, hi = float(values.min()), float(values.max())
        levels = np.linspace(lo, hi, n_levels + 2)[1:-1] if hi > lo else []
    levels = sorted(set(float(x) for x in levels) | {0.0})
    tv = values[graph.triangles]
    cv = _Canvas(*_bounds(graph.positions, graph), title, style)
    if graph.mode == "periodic":
        cv.frame(graph.points.L)
    counts = {}
    for lev in levels:
        segs = level_segments(graph.tri_pos, tv, lev)
        role = "level-zero" if lev == 0.0 else "level"
        for a, b in segs:
            cv.line(a, b, role)
        counts[lev] = len(segs)
    return cv.save(path), counts


def render_overlay(deformed, path, comparison=None, title="harmonic graph vs Delaunay of image",
                   style=None):
    """Harmonic graph (solid) over the Delaunay triangulation of ``H`` (dashed).

    Returns the path and the comparison dict with the non-shared edge
    counts, which are also written into the figure caption.
    """
    from .solver import non_delaunay_edges

    g = deformed.graph
    if g.d != 2:
        raise ValueError("rendering needs d = 2")
    cmp_ = comparison if comparison is not None else non_delaunay_edges(deformed)
    other = cmp_["delaunay"]
    H = deformed.H
    lo = np.minimum(H.min(axis=0), 0.0)
    hi = np.maximum(H.max(axis=0), g.points.L)
    cv = _Canvas(lo, hi, title, style)
    P = other.positions
    for (i, _), dv in zip(other.edges, other.disp):
        cv.line(P[i], P[i] + dv, "delaunay")
    Hw = np.mod(H, g.points.L)
    for (i, j), dv in zip(g.edges, _image_disp(g, H)):
        cv.line(Hw[i], Hw[i] + dv, "harmonic")
    if g.n:
        cv.star(Hw[0])
    cv.text(f"non-shared edges: {cmp_['missing']} harmonic-only, {cmp_['extra']} Delaunay-only")
    return cv.save(path), cmp_
