"""Periodic and planar Delaunay graphs with Voronoi facet data.

The periodic graph is the quotient of the Delaunay triangulation of the
``3^d`` tiled copies of the sample.  Triangulation is delegated to Qhull
(``scipy.spatial.Delaunay``); :func:`check_empty_circumcircle` re-verifies
the output with exact predicates.  Voronoi facets are segments between the
circumcentres of the two triangles sharing an edge; edges whose facet is
shorter than ``facet_tol`` times the mean spacing are degenerate
(cocircular quadruples) and are not Voronoi neighbours.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import product

import numpy as np
from scipy.spatial import Delaunay, QhullError, cKDTree

from .fields import EdgeField
from .pointprocess import PointSet
from .predicates import incircle, orient2d

__all__ = [
    "DelaunayGraph",
    "GeometryError",
    "VoronoiLocator",
    "assumption_diagnostics",
    "build_delaunay",
    "check_empty_circumcircle",
    "facet_measures",
    "omega_field",
]

FACET_TOL = 1e-12


class GeometryError(ValueError):
    pass


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DelaunayGraph:
    """Immutable neighbour graph of a point configuration.

    Undirected edges ``edges[k] = (i, j)`` have ``i < j``; ``shifts[k]`` is the
    integer image of ``j`` seen from ``i`` so that the displacement is
    ``disp[k] = x_j + L * shifts[k] - x_i``.  Directed edges are stored in CSR
    form (``indptr``, ``indices``) with back-references to the undirected
    edge (``dir_edge``) and its orientation (``dir_sign``).
    """

    points: PointSet
    edges: np.ndarray
    shifts: np.ndarray
    disp: np.ndarray
    facet: np.ndarray | None
    facet_u: np.ndarray | None
    indptr: np.ndarray
    indices: np.ndarray
    dir_src: np.ndarray
    dir_edge: np.ndarray
    dir_sign: np.ndarray
    dir_disp: np.ndarray
    dir_shift: np.ndarray
    dir_reverse: np.ndarray
    degree: np.ndarray
    cells: list | None
    cell_volume: np.ndarray | None
    cell_perimeter: np.ndarray | None
    triangles: np.ndarray | None
    tri_pos: np.ndarray | None
    n_dropped: int = 0

    @property
    def d(self) -> int:
        return self.points.d

    @property
    def n(self) -> int:
        return self.points.n

    @property
    def L(self) -> float:
        return self.points.L

    @property
    def mode(self) -> str:
        return self.points.mode

    @property
    def volume(self) -> float:
        return self.points.volume

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def n_directed(self) -> int:
        return self.indices.shape[0]

    @property
    def positions(self) -> np.ndarray:
        return self.points.points

    def neighbors(self, s: int) -> np.ndarray:
        return self.indices[self.indptr[s]:self.indptr[s + 1]]

    def locator(self) -> "VoronoiLocator":
        return self._locator

    @cached_property
    def _locator(self) -> "VoronoiLocator":
        return VoronoiLocator(self.points)

    @cached_property
    def edge_lookup(self) -> dict:
        """``(i, j, *shift) -> directed edge index``."""
        out = {}
        for e in range(self.n_directed):
            out[(int(self.dir_src[e]), int(self.indices[e]), *map(int, self.dir_shift[e]))] = e
        return out

    def is_connected(self) -> bool:
        from scipy.sparse import csr_matrix
        from scipy.sparse.csgraph import connected_components

        if self.n == 0:
            return True
        A = csr_matrix((np.ones(self.n_directed), self.indices, self.indptr), shape=(self.n, self.n))
        return connected_components(A, directed=False)[0] == 1


def _finish(ps, i, j, k, disp, facet, facet_u, cells=None, vol=None, per=None,
            tris=None, tri_pos=None, dropped=0) -> DelaunayGraph:
    n, d = ps.n, ps.d
    m = i.shape[0]
    order = np.lexsort((k[:, -1], k[:, 0], j, i))
    i, j, k, disp = i[order], j[order], k[order], disp[order]
    if facet is not None:
        facet, facet_u = facet[order], facet_u[order]
    src = np.concatenate([i, j])
    dst = np.concatenate([j, i])
    eid = np.concatenate([np.arange(m), np.arange(m)])
    sign = np.concatenate([np.ones(m), -np.ones(m)])
    dshift = np.concatenate([k, -k])
    ddisp = np.concatenate([disp, -disp])
    dorder = np.lexsort((dshift[:, -1], dshift[:, 0], dst, src))
    src, dst, eid, sign, dshift, ddisp = (a[dorder] for a in (src, dst, eid, sign, dshift, ddisp))
    # reverse of directed edge e: same undirected id, other orientation
    pos = np.empty(2 * m, dtype=np.int64)
    pos[dorder] = np.arange(2 * m)
    rev = np.empty(2 * m, dtype=np.int64)
    rev[pos[:m]] = pos[m:]
    rev[pos[m:]] = pos[:m]
    degree = np.bincount(src, minlength=n)
    indptr = np.concatenate([[0], np.cumsum(degree)]).astype(np.int64)
    fr = _frozen
    return DelaunayGraph(
        points=ps,
        edges=fr(np.stack([i, j], axis=1).astype(np.int64)),
        shifts=fr(k.astype(np.int64)),
        disp=fr(disp.astype(float)),
        facet=None if facet is None else fr(facet),
        facet_u=None if facet_u is None else fr(facet_u),
        indptr=fr(indptr),
        indices=fr(dst.astype(np.int64)),
        dir_src=fr(src.astype(np.int64)),
        dir_edge=fr(eid.astype(np.int64)),
        dir_sign=fr(sign),
        dir_disp=fr(ddisp.astype(float)),
        dir_shift=fr(dshift.astype(np.int64)),
        dir_reverse=fr(rev),
        degree=fr(degree.astype(np.int64)),
        cells=cells,
        cell_volume=None if vol is None else fr(vol),
        cell_perimeter=None if per is None else fr(per),
        triangles=None if tris is None else fr(tris.astype(np.int64)),
        tri_pos=None if tri_pos is None else fr(tri_pos),
        n_dropped=dropped,
    )


def build_delaunay(ps: PointSet, facet_tol: float = FACET_TOL) -> DelaunayGraph:
    """Delaunay (Voronoi-neighbour) graph of ``ps``.

    Periodic mode fills facet measures and cells as well.
    """
    if ps.d == 1:
        return _build_1d(ps)
    return _build_2d(ps, facet_tol)


def _build_1d(ps: PointSet) -> DelaunayGraph:
    n, L = ps.n, ps.L
    x = ps.points[:, 0]
    if n < 2:
        raise GeometryError("degenerate: too few points")
    o = np.argsort(x, kind="stable")
    a, b = o[:-1], o[1:]
    k = np.zeros((n - 1, 1), dtype=np.int64)
    if ps.mode == "periodic":
        if n < 3:
            raise GeometryError("box too small for periodic quotient")
        a = np.append(a, o[-1])
        b = np.append(b, o[0])
        k = np.vstack([k, [[1]]])
    disp = (x[b] + L * k[:, 0] - x[a])[:, None]
    swap = a > b
    i = np.where(swap, b, a)
    j = np.where(swap, a, b)
    k = np.where(swap[:, None], -k, k)
    disp = np.where(swap[:, None], -disp, disp)
    if ps.mode != "periodic":
        return _finish(ps, i, j, k, disp, None, None)
    m = i.shape[0]
    facet = np.ones(m)
    facet_u = np.ones((m, 1))
    xs = x[o]
    gap_right = np.diff(np.append(xs, xs[0] + L))
    gap_left = np.roll(gap_right, 1)
    vol = np.empty(n)
    vol[o] = 0.5 * (gap_left + gap_right)
    cells = [None] * n
    for r, v in enumerate(o):
        cells[v] = np.array([xs[r] - 0.5 * gap_left[r], xs[r] + 0.5 * gap_right[r]])
    per = np.full(n, 2.0)
    return _finish(ps, i, j, k, disp, facet, facet_u, cells, vol, per)


def _circumcenters(P):
    a = P[:, 0]
    b = P[:, 1] - a
    c = P[:, 2] - a
    bb = np.einsum("ij,ij->i", b, b)
    cc = np.einsum("ij,ij->i", c, c)
    den = 2.0 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    ux = (c[:, 1] * bb - b[:, 1] * cc) / den
    uy = (b[:, 0] * cc - c[:, 0] * bb) / den
    return a + np.stack([ux, uy], axis=1)


def _triangulate(T):
    try:
        return Delaunay(T).simplices.astype(np.int64)
    except QhullError as exc:
        raise GeometryError(f"degenerate: triangulation failed ({exc.args[0].splitlines()[0]})") from exc


def _edge_table(tri):
    """Undirected tiled edges with the (one or two) triangles sharing them."""
    a = np.concatenate([tri[:, 0], tri[:, 1], tri[:, 2]])
    b = np.concatenate([tri[:, 1], tri[:, 2], tri[:, 0]])
    t = np.tile(np.arange(tri.shape[0]), 3)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    order = np.lexsort((t, hi, lo))
    lo, hi, t = lo[order], hi[order], t[order]
    new = np.ones(lo.shape[0], dtype=bool)
    new[1:] = (lo[1:] != lo[:-1]) | (hi[1:] != hi[:-1])
    start = np.flatnonzero(new)
    count = np.diff(np.append(start, lo.shape[0]))
    t1 = t[start]
    t2 = np.where(count == 2, t[np.minimum(start + 1, lo.shape[0] - 1)], -1)
    return lo[start], hi[start], t1, t2


def _build_2d(ps: PointSet, facet_tol: float) -> DelaunayGraph:
    n, L = ps.n, ps.L
    X = ps.points
    if n < 3:
        raise GeometryError("degenerate: too few points")
    spacing = np.sqrt(ps.volume / n) if ps.mode == "periodic" else max(np.ptp(X, axis=0).max(), 1.0) / np.sqrt(n)
    tol = facet_tol * spacing
    if ps.mode == "planar":
        tri = _triangulate(X)
        lo, hi, t1, t2 = _edge_table(tri)
        cc = _circumcenters(X[tri])
        interior = t2 >= 0
        flen = np.full(lo.shape[0], np.inf)
        flen[interior] = np.linalg.norm(cc[t1[interior]] - cc[t2[interior]], axis=1)
        keep = flen >= tol
        i, j = lo[keep], hi[keep]
        k = np.zeros((i.shape[0], 2), dtype=np.int64)
        return _finish(ps, i, j, k, X[j] - X[i], None, None, tris=tri,
                       tri_pos=X[tri], dropped=int((~keep).sum()))

    tiles = np.array([(0, 0)] + [s for s in product((-1, 0, 1), repeat=2) if s != (0, 0)], dtype=np.int64)
    T = (X[None, :, :] + L * tiles[:, None, :]).reshape(-1, 2)
    orig = np.tile(np.arange(n), 9)
    tile = np.repeat(np.arange(9), n)
    tri = _triangulate(T)
    cc = _circumcenters(T[tri])
    lo, hi, t1, t2 = _edge_table(tri)
    olo, ohi = orig[lo], orig[hi]
    touches = (lo < n) | (hi < n)
    if np.any(touches & (olo == ohi)):
        raise GeometryError("box too small for periodic quotient")
    p = np.where(olo < ohi, lo, hi)
    q = np.where(olo < ohi, hi, lo)
    sel = p < n
    p, q, t1, t2 = p[sel], q[sel], t1[sel], t2[sel]
    if np.any(t2 < 0):
        raise GeometryError("box too small for periodic quotient")
    seg = cc[t2] - cc[t1]
    flen = np.hypot(seg[:, 0], seg[:, 1])
    keep = flen >= tol
    dropped = int((~keep).sum())
    p, q, seg, flen = p[keep], q[keep], seg[keep], flen[keep]
    i, j = orig[p], orig[q]
    k = tiles[tile[q]]
    pair = i * n + j
    if np.unique(pair).shape[0] != pair.shape[0]:
        raise GeometryError("box too small for periodic quotient")
    disp = T[q] - T[p]
    facet_u = np.stack([np.abs(seg[:, 1]), np.abs(seg[:, 0])], axis=1)

    # Voronoi cells: circumcentres of incident triangles sorted by angle
    flat = tri.ravel()
    tid = np.repeat(np.arange(tri.shape[0]), 3)
    central = flat < n
    v, t = flat[central], tid[central]
    rel = cc[t] - X[v]
    ang = np.arctan2(rel[:, 1], rel[:, 0])
    order = np.lexsort((ang, v))
    v, t, rel = v[order], t[order], rel[order]
    counts = np.bincount(v, minlength=n)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    idx = np.arange(v.shape[0])
    nxt = idx + 1
    ends = starts + counts - 1
    nxt[ends] = starts
    cross = rel[:, 0] * rel[nxt, 1] - rel[nxt, 0] * rel[:, 1]
    side = np.hypot(*(rel[nxt] - rel).T)
    vol = 0.5 * np.bincount(v, weights=cross, minlength=n)
    per = np.bincount(v, weights=side, minlength=n)
    absolute = cc[t]
    cells = np.split(absolute, np.cumsum(counts)[:-1])
    if abs(vol.sum() - ps.volume) > 1e-9 * ps.volume:
        raise GeometryError("box too small for periodic quotient (cell volumes do not tile the box)")

    # torus triangles: the copy whose smallest-id vertex sits in the central tile
    otri = orig[tri]
    if np.any((otri[:, 0] == otri[:, 1]) | (otri[:, 1] == otri[:, 2]) | (otri[:, 0] == otri[:, 2])):
        bad = (otri[:, 0] == otri[:, 1]) | (otri[:, 1] == otri[:, 2]) | (otri[:, 0] == otri[:, 2])
        if np.any(bad & (tri < n).any(axis=1)):
            raise GeometryError("box too small for periodic quotient")
    amin = np.argmin(otri, axis=1)
    first = tri[np.arange(tri.shape[0]), amin]
    tsel = first < n
    tris = otri[tsel]
    tpos = T[tri[tsel]]
    return _finish(ps, i, j, k, disp, flen, facet_u, cells, vol, per, tris, tpos, dropped)


def facet_measures(graph: DelaunayGraph) -> DelaunayGraph:
    """Return ``graph`` after checking its facet data is available."""
    if graph.mode != "periodic" or graph.facet is None:
        raise GeometryError("facet measures require periodic mode")
    return graph


def omega_field(graph: DelaunayGraph, u: int) -> EdgeField:
    """Signed projected facet measures ``sg(D . e_u) l(b_u)``; ``sg(0) = 0``."""
    facet_measures(graph)
    if not 0 <= u < graph.d:
        raise GeometryError(f"axis {u} out of range for d={graph.d}")
    return EdgeField(graph, np.sign(graph.disp[:, u]) * graph.facet_u[:, u], name=f"omega_{u}")


class VoronoiLocator:
    """``Cen(x)``: centre of the Voronoi cell containing ``x``.

    Ties (``x`` on a cell boundary) go to the lexicographically smallest
    point.
    """

    def __init__(self, ps: PointSet, tie_rtol: float = 1e-12):
        self.ps = ps
        self.tie_rtol = tie_rtol
        if ps.mode == "periodic":
            self.tree = cKDTree(ps.points, boxsize=ps.L)
        else:
            self.tree = cKDTree(ps.points)

    def _wrap(self, x):
        x = np.asarray(x, dtype=float)
        if self.ps.mode == "periodic":
            x = np.mod(x, self.ps.L)
            x = np.where(x >= self.ps.L, 0.0, x)
        return x

    def locate(self, x) -> int:
        return int(self.locate_many(np.atleast_2d(np.asarray(x, dtype=float).reshape(1, -1)))[0])

    def locate_many(self, xs) -> np.ndarray:
        xs = self._wrap(np.asarray(xs, dtype=float).reshape(-1, self.ps.d))
        k = min(4, self.ps.n)
        dist, idx = self.tree.query(xs, k=k)
        dist = dist.reshape(len(xs), k)
        idx = idx.reshape(len(xs), k)
        out = idx[:, 0].copy()
        tied = dist[:, 1] <= dist[:, 0] * (1 + self.tie_rtol) + 1e-300 if k > 1 else np.zeros(len(xs), bool)
        pts = self.ps.points
        for r in np.flatnonzero(tied):
            cand = idx[r][dist[r] <= dist[r, 0] * (1 + self.tie_rtol) + 1e-300]
            out[r] = min(cand, key=lambda c: tuple(pts[c]))
        return out


def check_empty_circumcircle(graph: DelaunayGraph) -> int:
    """Count (triangle, point) violations of the empty-circumcircle property.

    Exact predicates; intended for planar samples of a few hundred points.
    """
    if graph.d != 2 or graph.triangles is None:
        raise GeometryError("empty-circumcircle check needs a 2-d triangulation")
    pts = [tuple(p) for p in graph.positions]
    bad = 0
    for tri in graph.triangles:
        a, b, c = (pts[v] for v in tri)
        if orient2d(a, b, c) < 0:
            b, c = c, b
        members = set(int(v) for v in tri)
        for v, q in enumerate(pts):
            if v not in members and incircle(a, b, c, q) > 0:
                bad += 1
    return bad


def assumption_diagnostics(graph: DelaunayGraph, beta: float = 0.1, r: float = 4.5) -> dict:
    """Vertex averages standing in for the moment assumptions on the process.

    Returns mean and standard error of ``exp(beta a(0))``, of the squared
    cell perimeter and of ``sum_s a(0, s) |s|^r``.  Report only.
    """
    if graph.mode != "periodic":
        raise GeometryError("assumption diagnostics require periodic mode")
    n = graph.n

    def stat(x):
        x = np.asarray(x, dtype=float)
        se = float(x.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        return {"mean": float(x.mean()), "stderr": se}

    lengths = np.linalg.norm(graph.dir_disp, axis=1)
    moment = np.bincount(graph.dir_src, weights=lengths**r, minlength=n)
    return {
        "beta": beta,
        "r": r,
        "exp_degree": stat(np.exp(beta * graph.degree)),
        "perimeter_sq": stat(graph.cell_perimeter**2),
        "neighbor_moment": stat(moment),
        "mean_degree": float(graph.degree.mean()),
    }
