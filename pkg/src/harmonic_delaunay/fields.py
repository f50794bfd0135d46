"""Surfaces, edge fields and their calculus on a Delaunay graph.

Conventions
-----------
* A :class:`Surface` is ``eta(s) = c . pos(s) + psi(s)``: a structural tilt
  ``c`` plus a periodic part ``psi``.  Edge increments always go through
  the wrapped displacement, ``c . D(s, s') + psi(s') - psi(s)``.
* An :class:`EdgeField` stores one value per undirected edge ``(i, j)``
  with ``i < j``; when ``antisymmetric`` the value on ``(j, i)`` is the
  negative, otherwise the field is given per directed edge in the graph's
  CSR order.
* Campbell means use the per-volume normalisation ``1 / (2 L^d)`` summed
  over ordered neighbour pairs; surface means use ``1 / L^d``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .geometry import DelaunayGraph

__all__ = [
    "EdgeField",
    "Surface",
    "campbell_mean",
    "divergence",
    "gradient",
    "integration_by_parts_check",
    "laplacian",
    "mass_transport_check",
    "surface_mean",
    "tilt_I_pointwise",
    "tilt_J",
    "TiltTrace",
]


class FieldError(ValueError):
    pass


@dataclass(eq=False)
class EdgeField:
    graph: "DelaunayGraph"
    values: np.ndarray
    antisymmetric: bool = True
    name: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = self.graph.n_edges if self.antisymmetric else self.graph.n_directed
        if self.values.shape != (expected,):
            raise FieldError(f"field needs {expected} values, got {self.values.shape}")

    def directed(self) -> np.ndarray:
        """Values on every directed edge, in CSR order."""
        if self.antisymmetric:
            g = self.graph
            return g.dir_sign * self.values[g.dir_edge]
        return self.values

    def __add__(self, other: "EdgeField") -> "EdgeField":
        if self.antisymmetric and other.antisymmetric:
            return EdgeField(self.graph, self.values + other.values)
        return EdgeField(self.graph, self.directed() + other.directed(), antisymmetric=False)

    def __mul__(self, a: float) -> "EdgeField":
        return EdgeField(self.graph, a * self.values, self.antisymmetric, self.name)

    __rmul__ = __mul__


@dataclass(eq=False)
class Surface:
    graph: "DelaunayGraph"
    tilt: np.ndarray
    psi: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        d = self.graph.d
        self.tilt = np.broadcast_to(np.asarray(self.tilt, dtype=float), (d,)).copy()
        self.psi = np.asarray(self.psi, dtype=float).copy()
        if self.psi.shape != (self.graph.n,):
            raise FieldError(f"surface needs {self.graph.n} heights, got {self.psi.shape}")

    @classmethod
    def affine(cls, graph, tilt) -> "Surface":
        """The hyperplane ``gamma(s) = c . s``."""
        return cls(graph, tilt, np.zeros(graph.n))

    @classmethod
    def periodic(cls, graph, psi) -> "Surface":
        return cls(graph, np.zeros(graph.d), psi)

    @property
    def heights(self) -> np.ndarray:
        return self.graph.positions @ self.tilt + self.psi

    @property
    def has_tilt(self) -> bool:
        return bool(np.any(self.tilt != 0.0))

    def copy(self) -> "Surface":
        return Surface(self.graph, self.tilt.copy(), self.psi.copy(), dict(self.meta))

    def normalized(self) -> "Surface":
        """Gauge-fixed copy with ``psi(vertex 0) = 0``."""
        return Surface(self.graph, self.tilt, self.psi - self.psi[0], dict(self.meta))

    def offsets(self) -> np.ndarray:
        """Tilt contribution ``c . D(s, s')`` on every directed edge."""
        return self.graph.dir_disp @ self.tilt

    def __add__(self, other: "Surface") -> "Surface":
        return Surface(self.graph, self.tilt + other.tilt, self.psi + other.psi)

    def __sub__(self, other: "Surface") -> "Surface":
        return Surface(self.graph, self.tilt - other.tilt, self.psi - other.psi)

    def __mul__(self, a: float) -> "Surface":
        return Surface(self.graph, a * self.tilt, a * self.psi)

    __rmul__ = __mul__


def gradient(eta: Surface) -> EdgeField:
    g = eta.graph
    i, j = g.edges[:, 0], g.edges[:, 1]
    vals = g.disp @ eta.tilt + eta.psi[j] - eta.psi[i]
    return EdgeField(g, vals, name="grad")


def directed_gradient(eta: Surface) -> np.ndarray:
    g = eta.graph
    return g.dir_disp @ eta.tilt + eta.psi[g.indices] - eta.psi[g.dir_src]


def divergence(zeta: EdgeField) -> np.ndarray:
    """``div zeta(s) = sum_{s'} a(s, s') zeta(s, s')``."""
    g = zeta.graph
    return np.bincount(g.dir_src, weights=zeta.directed(), minlength=g.n)


def laplacian(eta: Surface) -> np.ndarray:
    g = eta.graph
    return np.bincount(g.dir_src, weights=directed_gradient(eta), minlength=g.n)


def campbell_mean(zeta: EdgeField, weight: EdgeField | None = None) -> float:
    """Finite-torus Campbell/Cesaro mean ``(1/(2 L^d)) sum_s sum_s' a zeta``.

    With ``weight`` the product field is averaged, giving the inner product
    of the two fields.
    """
    vals = zeta.directed()
    if weight is not None:
        vals = vals * weight.directed()
    return float(np.sum(vals)) / (2.0 * zeta.graph.volume)


def campbell_power(zeta: EdgeField, r: float) -> float:
    """``C(|zeta|^r)``."""
    return float(np.sum(np.abs(zeta.directed()) ** r)) / (2.0 * zeta.graph.volume)


def surface_mean(values: np.ndarray, graph) -> float:
    """Cesaro mean of a translation-invariant surface: ``(1/L^d) sum_s f(s)``."""
    return float(np.sum(values)) / graph.volume


def tilt_J(eta: Surface, u: int) -> float:
    """Integrated tilt ``C(grad eta . omega_u)``."""
    from .geometry import omega_field

    return campbell_mean(gradient(eta), omega_field(eta.graph, u))


def mass_transport_check(phi) -> float:
    """``|sum phi(s, s') - sum phi(s', s)|`` over all directed edges.

    ``phi`` is an :class:`EdgeField` or an array of directed values in CSR
    order.
    """
    if isinstance(phi, EdgeField):
        g, vals = phi.graph, phi.directed()
        rev = g.dir_reverse
    else:
        raise FieldError("pass an EdgeField (use antisymmetric=False for directed data)")
    forward = float(np.sum(vals))
    backward = float(np.sum(vals[rev]))
    return abs(forward - backward)


def integration_by_parts_check(phi: Surface, zeta: EdgeField) -> float:
    """Residual of ``C(grad phi . zeta) = -(1/L^d) sum_s phi(s) div zeta(s)``."""
    if phi.has_tilt:
        raise FieldError("identity requires translation-invariant surface")
    if not zeta.antisymmetric:
        raise FieldError("identity requires an antisymmetric field")
    left = campbell_mean(gradient(phi), zeta)
    right = -surface_mean(phi.psi * divergence(zeta), phi.graph)
    return abs(left - right)


@dataclass
class TiltTrace:
    value: float
    crossings: list
    offset: float
    perturbations: int


def tilt_I_pointwise(eta: Surface, u: int, y: float, K: float | None = None,
                     x0: float = 0.0, max_perturb: int = 20) -> TiltTrace:
    """Line-crossing tilt estimate along ``l_u(y)``.

    Starting at the cell containing the point at coordinate ``x0`` along
    direction ``e_u`` and transverse offset ``y``, successive Voronoi
    facets crossed by the line are located and the gradient increments
    summed; the total divided by ``K`` is returned.  ``K`` defaults to one
    full wrap (``L``), in which case the telescoping is exact.
    """
    g = eta.graph
    if g.mode != "periodic":
        raise FieldError("pointwise tilt requires periodic mode")
    if not 0 <= u < g.d:
        raise FieldError(f"axis {u} out of range")
    K = g.L if K is None else float(K)
    if K <= 0:
        raise FieldError("K must be positive")
    grad_dir = directed_gradient(eta)
    perturb = 0
    yy = float(y)
    while True:
        try:
            total, crossings = _trace_line(g, grad_dir, u, yy, x0, K)
            break
        except _Degenerate:
            perturb += 1
            if perturb > max_perturb:
                raise FieldError("line keeps hitting Voronoi vertices") from None
            yy = float(y) + 1e-9 * perturb
    return TiltTrace(total / K, crossings, yy - float(y), perturb)


class _Degenerate(Exception):
    pass


def _trace_line(g, grad_dir, u, y, x0, K):
    d = g.d
    start = np.zeros(d)
    start[u] = x0
    if d == 2:
        start[1 - u] = y
    s = g.locator().locate(start)
    # p: current point on the line, in the unwrapped frame of cell s
    site = g.points.points[s].copy()
    p = start.copy()
    # bring the start point next to its site (minimal image)
    p = site + _wrap(p - site, g.L)
    travelled = 0.0
    total = 0.0
    crossings = []
    indptr, indices, disp = g.indptr, g.indices, g.dir_disp
    guard = 0
    while True:
        guard += 1
        if guard > 100 * g.n + 1000:
            raise FieldError("line trace did not terminate")
        lo, hi = indptr[s], indptr[s + 1]
        best, best_alpha, second = -1, np.inf, np.inf
        rel = p - site
        for e in range(lo, hi):
            D = disp[e]
            du = D[u]
            if du <= 0.0:
                continue
            alpha = (0.5 * (D @ D) - rel @ D) / du
            if alpha < best_alpha:
                second = best_alpha
                best, best_alpha = e, alpha
            elif alpha < second:
                second = alpha
        if best < 0:
            raise FieldError("no exit facet found")
        if second - best_alpha < 1e-12 * max(1.0, g.L):
            raise _Degenerate
        if travelled + best_alpha > K:
            return total, crossings
        travelled += best_alpha
        total += grad_dir[best]
        crossings.append(int(best))
        p = p.copy()
        p[u] += best_alpha
        site = site + disp[best]
        s = int(indices[best])


def _wrap(v, L):
    return v - L * np.round(v / L)
