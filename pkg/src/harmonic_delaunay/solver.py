"""Direct computation of harmonic surfaces with prescribed tilt.

On the torus the harmonic surface is ``h = c . pos + chi`` with ``chi``
periodic, and ``chi`` solves ``(D - A) chi = g`` where
``g(s) = sum_{s'} c . D(s, s')`` is the Laplacian of the hyperplane.  The
graph Laplacian has the constants as its kernel; iterates are kept
mean-zero and the gauge ``chi(0) = 0`` is applied at the end.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels
from .fields import Surface, campbell_mean, gradient, laplacian
from .pointprocess import PointSet

__all__ = [
    "DeformedGraph",
    "NotConvergedError",
    "SolverError",
    "SolverReport",
    "corrector",
    "deform",
    "non_delaunay_edges",
    "solve_harmonic",
    "sublinearity_scan",
]

METHODS = ("cg", "relax")
# iterate well past the requested tolerance so that the two methods agree on chi
_INNER = 1e-3


class SolverError(ValueError):
    pass


@dataclass
class SolverReport:
    method: str
    iterations: int
    residual_inf: float
    residual_l2: float
    energy: float
    wall_time: float
    converged: bool = True
    boundary: str = "periodic"

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "iterations": self.iterations,
            "residual_inf": self.residual_inf,
            "residual_l2": self.residual_l2,
            "energy": self.energy,
            "wall_time": self.wall_time,
            "converged": self.converged,
            "boundary": self.boundary,
        }


class NotConvergedError(RuntimeError):
    def __init__(self, report: SolverReport):
        super().__init__(f"not converged after {report.iterations} iterations "
                         f"(residual {report.residual_inf:.3e})")
        self.report = report


def laplacian_matrix(graph) -> sp.csr_matrix:
    """``D - A`` as a sparse matrix (multi-edges are summed)."""
    A = sp.csr_matrix((np.ones(graph.n_directed), graph.indices, graph.indptr),
                      shape=(graph.n, graph.n))
    return (sp.diags(graph.degree.astype(float)) - A).tocsr()


def _cg(M, b, target, max_iter, project):
    """Conjugate gradients on ``M x = b`` with the constants projected out."""
    x = np.zeros_like(b)
    r = b - b.mean() if project else b.copy()
    p = r.copy()
    rr = float(r @ r)
    it = 0
    while it < max_iter:
        if np.max(np.abs(r)) <= target:
            break
        Mp = M @ p
        pMp = float(p @ Mp)
        if pMp <= 0:
            break
        alpha = rr / pMp
        x += alpha * p
        r -= alpha * Mp
        if project:
            r -= r.mean()
        it += 1
        if it % 50 == 0:
            # replace the recursive residual to stop float drift
            r = b - M @ x
            if project:
                r -= r.mean()
        rr_new = float(r @ r)
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x, it


def _relax(graph, offset, target, max_iter, backend, check_every=20):
    psi = np.zeros(graph.n)
    it = 0
    while it < max_iter:
        k = min(check_every, max_iter - it)
        kernels.gauss_seidel(graph.indptr, graph.indices, offset, psi, k, backend=backend)
        it += k
        psi -= psi.mean()
        lap = np.bincount(graph.dir_src, weights=psi[graph.indices] + offset, minlength=graph.n) \
            - graph.degree * psi
        if np.max(np.abs(lap)) <= target:
            break
    return psi, it


def _hull_vertices(graph) -> np.ndarray:
    from scipy.spatial import ConvexHull

    if graph.d == 1:
        x = graph.positions[:, 0]
        return np.array(sorted({int(np.argmin(x)), int(np.argmax(x))}))
    return np.asarray(ConvexHull(graph.positions).vertices, dtype=np.int64)


def solve_harmonic(graph, tilt, tol: float = 1e-10, max_iter: int = 10**6, method: str = "cg",
                   boundary: str = "periodic", backend: str | None = None):
    """Harmonic surface with tilt ``c``.

    Parameters
    ----------
    graph : DelaunayGraph
        Connected graph.  Periodic unless ``boundary="dirichlet"``.
    tilt : array_like
        The tilt vector ``c``.
    tol : float
        Bound on ``max_s |Laplacian h(s)|`` (over interior vertices for the
        Dirichlet problem).
    max_iter : int
        CG iterations or Gauss-Seidel sweeps.
    method : {"cg", "relax"}
    boundary : {"periodic", "dirichlet"}
        ``"dirichlet"`` fixes the convex-hull vertices of a planar graph to
        the hyperplane and solves for the rest.

    Returns
    -------
    h : Surface
    report : SolverReport

    Raises
    ------
    NotConvergedError
        When ``max_iter`` is exhausted before reaching ``tol``.
    """
    if method not in METHODS:
        raise SolverError(f"unknown method {method!r}")
    if boundary not in ("periodic", "dirichlet"):
        raise SolverError(f"unknown boundary {boundary!r}")
    if not tol > 0:
        raise SolverError("tol must be positive")
    if graph.n == 0 or not graph.is_connected():
        raise SolverError("graph is disconnected")
    t0 = time.perf_counter()
    c = np.broadcast_to(np.asarray(tilt, dtype=float), (graph.d,)).copy()
    offset = graph.dir_disp @ c
    g = np.bincount(graph.dir_src, weights=offset, minlength=graph.n)
    scale = max(1.0, float(np.max(np.abs(g))) if g.size else 0.0)
    target = max(tol * _INNER, 64 * np.finfo(float).eps * scale * graph.degree.max())
    M = laplacian_matrix(graph)

    if boundary == "periodic":
        if graph.mode != "periodic" and np.any(c != 0):
            raise SolverError("tilted periodic solve requires a periodic graph")
        if method == "cg":
            chi, it = _cg(M, g, target, max_iter, project=True)
        else:
            chi, it = _relax(graph, offset, target, max_iter, backend)
        chi = chi - chi[0]
        mask = np.ones(graph.n, dtype=bool)
    else:
        fixed = _hull_vertices(graph)
        mask = np.ones(graph.n, dtype=bool)
        mask[fixed] = False
        free = np.flatnonzero(mask)
        chi = np.zeros(graph.n)
        if free.size:
            Mi = M[free][:, free].tocsr()
            if method == "cg":
                sol, it = _cg(Mi, g[free], target, max_iter, project=False)
            else:
                sol, it = _dirichlet_relax(Mi, g[free], target, max_iter)
            chi[free] = sol
        else:
            it = 0

    h = Surface(graph, c, chi, meta={"method": method, "boundary": boundary})
    lap = laplacian(h)[mask]
    res_inf = float(np.max(np.abs(lap))) if lap.size else 0.0
    report = SolverReport(
        method=method,
        iterations=int(it),
        residual_inf=res_inf,
        residual_l2=float(np.linalg.norm(lap)),
        energy=_energy(h) if graph.mode == "periodic" else float("nan"),
        wall_time=time.perf_counter() - t0,
        converged=res_inf <= tol,
        boundary=boundary,
    )
    if not report.converged:
        raise NotConvergedError(report)
    return h, report


def _dirichlet_relax(M, b, target, max_iter):
    # plain Gauss-Seidel on the reduced system via a triangular solve per sweep
    from scipy.sparse.linalg import spsolve_triangular

    lower = sp.tril(M, format="csr")
    upper = sp.triu(M, k=1, format="csr")
    x = np.zeros_like(b)
    it = 0
    while it < max_iter:
        x = spsolve_triangular(lower, b - upper @ x, lower=True)
        it += 1
        if np.max(np.abs(b - M @ x)) <= target:
            break
    return x, it


def _energy(eta: Surface) -> float:
    gr = gradient(eta)
    return campbell_mean(gr, gr)


def corrector(h: Surface, tilt=None) -> tuple[np.ndarray, dict]:
    """Periodic part of ``h`` in the gauge ``chi(0) = 0`` and the energy split.

    Returns ``chi`` and a report with ``max_abs``, the energies of the
    hyperplane ``gamma``, of ``h`` and of ``gamma - h``, and the relative
    error of ``C(|grad gamma|^2) = C(|grad h|^2) + C(|grad (gamma - h)|^2)``.
    """
    c = h.tilt if tilt is None else np.broadcast_to(np.asarray(tilt, dtype=float), (h.graph.d,))
    if not np.allclose(c, h.tilt, rtol=0, atol=0):
        raise SolverError("surface was not produced with this tilt")
    chi = h.psi - h.psi[0]
    gamma = Surface.affine(h.graph, c)
    e_gamma = _energy(gamma)
    e_h = _energy(h)
    e_diff = _energy(gamma - h)
    split = abs(e_gamma - e_h - e_diff) / e_gamma if e_gamma > 0 else abs(e_h + e_diff)
    return chi, {
        "max_abs": float(np.max(np.abs(chi))) if chi.size else 0.0,
        "energy_gamma": e_gamma,
        "energy_h": e_h,
        "energy_difference": e_diff,
        "split_rel_error": float(split),
    }


@dataclass
class DeformedGraph:
    """Image ``H(s) = s + chi(s)`` of the vertices under the harmonic deformation."""

    graph: object
    chi: np.ndarray  # n x d, column u is the corrector for tilt e_u
    reports: list = field(default_factory=list)
    non_delaunay: int | None = None

    @property
    def H(self) -> np.ndarray:
        return self.graph.positions + self.chi

    def barycenter_residual(self) -> np.ndarray:
        """``|H(s) - mean of neighbour H(s')|`` per vertex (max over components)."""
        g = self.graph
        dH = g.dir_disp + self.chi[g.indices] - self.chi[g.dir_src]
        s = np.stack([np.bincount(g.dir_src, weights=dH[:, u], minlength=g.n) for u in range(g.d)], axis=1)
        return np.max(np.abs(s / g.degree[:, None]), axis=1)


def deform(graph, tol: float = 1e-10, method: str = "cg", max_iter: int = 10**6,
           count_non_delaunay: bool = True) -> DeformedGraph:
    """Solve once per coordinate direction and assemble ``H``."""
    chi = np.zeros((graph.n, graph.d))
    reports = []
    for u in range(graph.d):
        e = np.zeros(graph.d)
        e[u] = 1.0
        h, rep = solve_harmonic(graph, e, tol=tol, method=method, max_iter=max_iter)
        chi[:, u] = h.psi
        reports.append(rep)
    out = DeformedGraph(graph, chi, reports)
    if count_non_delaunay and graph.d == 2 and graph.mode == "periodic":
        out.non_delaunay = non_delaunay_edges(out)["missing"]
    return out


def deformed_delaunay(deformed: DeformedGraph):
    """Periodic Delaunay graph of the deformed points ``H(s) mod L``."""
    from .geometry import build_delaunay

    g = deformed.graph
    ps = g.points
    pts = np.mod(deformed.H, ps.L)
    pts[pts >= ps.L] = 0.0
    return build_delaunay(PointSet(ps.d, ps.L, pts, ps.intensity, ps.seed, ps.mode))


def non_delaunay_edges(deformed: DeformedGraph, other=None) -> dict:
    """Compare the harmonic graph with the Delaunay graph of its image.

    Edges are matched by endpoint pair and (unwrapped) displacement.
    ``missing`` counts harmonic-graph edges absent from the new
    triangulation, ``extra`` the reverse.
    """
    g = deformed.graph
    if other is None:
        other = deformed_delaunay(deformed)
    L = g.points.L
    i, j = g.edges[:, 0], g.edges[:, 1]
    dh = g.disp + deformed.chi[j] - deformed.chi[i]
    table: dict = {}
    for (a, b), dd in zip(other.edges.tolist(), other.disp):
        table.setdefault((a, b), []).append(dd)

    def present(a, b, dd, tab):
        return any(np.max(np.abs(x - dd)) < 1e-6 * L for x in tab.get((a, b), ()))

    missing = np.array([not present(a, b, dd, table) for a, b, dd in zip(i.tolist(), j.tolist(), dh)],
                       dtype=bool)
    own: dict = {}
    for a, b, dd in zip(i.tolist(), j.tolist(), dh):
        own.setdefault((a, b), []).append(dd)
    extra = np.array([not present(a, b, dd, own) for (a, b), dd in zip(other.edges.tolist(), other.disp)],
                     dtype=bool)
    return {
        "missing": int(missing.sum()),
        "extra": int(extra.sum()),
        "n_edges": int(g.n_edges),
        "missing_mask": missing,
        "extra_mask": extra,
        "delaunay": other,
    }


def sublinearity_scan(h: Surface, tilt=None, fractions=(1 / 16, 1 / 8, 1 / 4, 1 / 2)) -> list[dict]:
    """``max |chi(s)| / n`` over centred windows of half-width ``n = f L``.

    Windows are periodic max-norm balls around vertex 0.  ``chi`` is taken
    as stored (no re-gauging), so a deliberately shifted corrector shows up
    in the scan.
    """
    g = h.graph
    if tilt is not None and not np.allclose(np.asarray(tilt, dtype=float), h.tilt):
        raise SolverError("surface was not produced with this tilt")
    L = g.points.L
    rel = g.positions - g.positions[0]
    if g.mode == "periodic":
        rel = rel - L * np.round(rel / L)
    dist = np.max(np.abs(rel), axis=1)
    out = []
    for f in fractions:
        n = f * L
        inside = dist <= n
        m = float(np.max(np.abs(h.psi[inside]))) if inside.any() else 0.0
        out.append({"fraction": float(f), "half_width": float(n), "n_vertices": int(inside.sum()),
                    "max_abs_chi": m, "ratio": m / n})
    return out
