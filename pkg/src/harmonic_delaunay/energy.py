"""Triangle orientation fields and the regularization functional.

Every edge ``(s, s')`` of a triangulation of the torus is shared by two
triangles ``s s' alpha_+`` and ``s s' alpha_-``.  Here ``alpha_+`` is the
common neighbour to the right of the direction ``s' - s``, i.e. the one with

    cross(s' - s, alpha - s) < 0,

so that the triangle ``(s, s', alpha_+)`` is traversed clockwise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import EdgeField, Surface, campbell_mean, directed_gradient, gradient

__all__ = [
    "EnergyError",
    "TriangleOrientation",
    "barycenter_argmin",
    "barycenter_check",
    "cyclic_dot_sum",
    "regularization_functional",
    "triangle_orientation",
    "zeta_pm",
]


class EnergyError(ValueError):
    pass


@dataclass(frozen=True)
class TriangleOrientation:
    """Directed-edge indices of ``(s, alpha_+(s, s'))`` and ``(s, alpha_-(s, s'))``.

    ``plus[e]`` is the CSR index of the directed edge from ``s`` to
    ``alpha_+`` for the directed edge ``e = (s, s')``.  ``boundary`` marks
    planar hull edges, which have a single common neighbour used for both
    sides.
    """

    graph: object
    plus: np.ndarray
    minus: np.ndarray
    boundary: np.ndarray

    @property
    def alpha_plus(self) -> np.ndarray:
        return self.graph.indices[self.plus]

    @property
    def alpha_minus(self) -> np.ndarray:
        return self.graph.indices[self.minus]


def triangle_orientation(graph) -> TriangleOrientation:
    """Orient the triangles of a d = 2 graph around every directed edge."""
    if graph.d != 2 or graph.triangles is None:
        raise EnergyError("triangle orientation needs a d = 2 triangulation")
    lookup = graph.edge_lookup
    X = graph.positions
    L = graph.points.L
    periodic = graph.mode == "periodic"
    m = graph.n_directed
    plus = np.full(m, -1, dtype=np.int64)
    minus = np.full(m, -1, dtype=np.int64)
    tris = graph.triangles
    P = graph.tri_pos

    def key(a, b, pa, pb):
        if periodic:
            k = np.rint((pb - pa - (X[b] - X[a])) / L).astype(np.int64)
            return (int(a), int(b), int(k[0]), int(k[1]))
        return (int(a), int(b), 0, 0)

    for t in range(tris.shape[0]):
        ids, pos = tris[t], P[t]
        for p, q, r in ((0, 1, 2), (1, 2, 0), (2, 0, 1), (1, 0, 2), (2, 1, 0), (0, 2, 1)):
            e = lookup.get(key(ids[p], ids[q], pos[p], pos[q]))
            f = lookup.get(key(ids[p], ids[r], pos[p], pos[r]))
            if e is None or f is None:
                raise EnergyError("triangle uses an edge missing from the graph (degenerate input)")
            u, w = pos[q] - pos[p], pos[r] - pos[p]
            cr = u[0] * w[1] - u[1] * w[0]
            side = plus if cr < 0 else minus
            if side[e] != -1:
                raise EnergyError("edge has two triangles on one side (degenerate input)")
            side[e] = f
    boundary = (plus < 0) | (minus < 0)
    if np.any(boundary):
        if periodic:
            raise EnergyError("edge with fewer than two common neighbours")
        plus = np.where(plus < 0, minus, plus)
        minus = np.where(minus < 0, plus, minus)
    return TriangleOrientation(graph, plus, minus, boundary)


def zeta_pm(eta: Surface, orient: TriangleOrientation | None = None) -> tuple[EdgeField, EdgeField]:
    """``zeta_+-(s, s') = grad eta(s, alpha_+-(s, s'))`` as directed fields."""
    g = eta.graph
    if orient is None:
        orient = triangle_orientation(g)
    grad = directed_gradient(eta)
    return (EdgeField(g, grad[orient.plus], antisymmetric=False, name="zeta_plus"),
            EdgeField(g, grad[orient.minus], antisymmetric=False, name="zeta_minus"))


def regularization_functional(eta: Surface, orient: TriangleOrientation | None = None) -> float:
    """``C(grad eta . zeta_+^eta)``.

    Along harness trajectories from a common initial surface, each event
    changes this by exactly half the change of ``C(|grad eta|^2)``.
    """
    zp, _ = zeta_pm(eta, orient)
    return campbell_mean(gradient(eta), zp)


def cyclic_dot_sum(points, x) -> np.ndarray:
    """``F(x) = sum_k (s_k - x) . (s_{k+1} - x)`` with indices mod n.

    ``x`` may be a single point or an array of shape (..., 2).
    """
    P = np.asarray(points, dtype=float)
    x = np.asarray(x, dtype=float)
    Q = np.roll(P, -1, axis=0)
    out = np.zeros(x.shape[:-1])
    for a, b in zip(P, Q):
        out = out + np.sum((a - x) * (b - x), axis=-1)
    return out


def barycenter_argmin(points) -> np.ndarray:
    """Minimizer of :func:`cyclic_dot_sum`, which is the arithmetic mean."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if P.shape[0] < 1:
        raise EnergyError("need at least one point")
    return P.mean(axis=0)


def barycenter_check(points, step: float = 1e-3, window: float = 1.0) -> dict:
    """Grid search of :func:`cyclic_dot_sum` around the mean.

    Returns the grid minimizer and its distance (in grid steps, max norm)
    from the mean.
    """
    m = barycenter_argmin(points)
    k = int(round(window / step))
    ax = np.arange(-k, k + 1) * step
    gx, gy = np.meshgrid(m[0] + ax, m[1] + ax, indexing="ij")
    F = cyclic_dot_sum(points, np.stack([gx, gy], axis=-1))
    a, b = np.unravel_index(np.argmin(F), F.shape)
    best = np.array([gx[a, b], gy[a, b]])
    return {"mean": m, "grid_argmin": best, "steps_from_mean": float(np.max(np.abs(best - m)) / step),
            "F_min": float(F[a, b])}
