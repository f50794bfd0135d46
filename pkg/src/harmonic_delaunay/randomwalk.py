"""Continuous-time random walks on Delaunay graphs and their diagnostics.

Two clocks are supported:

``"jump-rate"``
    holding time at ``s`` is exponential with rate ``a(s)``; each neighbour
    is reached at rate 1 (the walk ``Y_t``).
``"uniformized"``
    jumps at the epochs of a rate-1 Poisson process, uniform neighbour
    (the walk ``X_t``; also the law of the backward walks of the harness).

Positions are unwrapped across the torus by accumulating the wrapped
displacement of every jump.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .fields import Surface, campbell_power, directed_gradient, gradient
from .pointprocess import substream

__all__ = [
    "WalkTrace",
    "environment_check",
    "martingale_residual",
    "moment_check",
    "msd_diagnostic",
    "poisson_moment",
    "simulate_walks",
    "walk",
]

CLOCKS = ("jump-rate", "uniformized")


@dataclass
class WalkTrace:
    times: np.ndarray  # jump times, strictly increasing; times[0] = 0 is the start
    vertices: np.ndarray
    unwrapped: np.ndarray  # position after each jump, start position first
    start: int
    seed: int
    duration: float
    clock: str


def simulate_walks(graph, starts, t_grid, rng, clock="uniformized", surface=None,
                   record_path=False):
    """Advance independent walkers and sample them on ``t_grid``.

    Returns a dict with ``vertex`` (walkers x times), ``disp`` (walkers x
    times x d, unwrapped displacement from the start), ``jumps`` (jump
    counts at each grid time) and, when ``surface`` is given, ``increment``:
    the change of the surface along the path, summed edge by edge.
    """
    if clock not in CLOCKS:
        raise ValueError(f"unknown clock {clock!r}")
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) < 0) or (t_grid.size and t_grid[0] < 0):
        raise ValueError("t_grid must be non-negative and sorted")
    v = np.array(starts, dtype=np.int64).copy()
    W, nt, d = v.shape[0], t_grid.shape[0], graph.d
    t_max = float(t_grid[-1]) if nt else 0.0
    indptr, indices, deg = graph.indptr, graph.indices, graph.degree
    grad = directed_gradient(surface) if surface is not None else None

    disp = np.zeros((W, d))
    inc = np.zeros(W)
    njump = np.zeros(W, dtype=np.int64)
    out_v = np.empty((W, nt), dtype=np.int64)
    out_d = np.empty((W, nt, d))
    out_i = np.empty((W, nt))
    out_n = np.empty((W, nt), dtype=np.int64)
    recorded = np.zeros((W, nt), dtype=bool)

    def rate(vv):
        return np.ones(vv.shape[0]) if clock == "uniformized" else deg[vv].astype(float)

    next_jump = rng.exponential(size=W) / rate(v)
    path = [(0.0, v.copy(), disp.copy())] if record_path else None
    while True:
        for k in range(nt):
            m = ~recorded[:, k] & (t_grid[k] < next_jump)
            if m.any():
                out_v[m, k] = v[m]
                out_d[m, k] = disp[m]
                out_i[m, k] = inc[m]
                out_n[m, k] = njump[m]
                recorded[m, k] = True
        active = next_jump <= t_max
        if not active.any():
            break
        u = rng.random(W)
        gaps = rng.exponential(size=W)
        a = np.flatnonzero(active)
        va = v[a]
        k = np.minimum((u[a] * deg[va]).astype(np.int64), deg[va] - 1)
        e = indptr[va] + k
        disp[a] += graph.dir_disp[e]
        if grad is not None:
            inc[a] += grad[e]
        njump[a] += 1
        v[a] = indices[e]
        if record_path:
            path.append((float(next_jump[0]), v.copy(), disp.copy()))
        next_jump[a] += gaps[a] / rate(v[a])
    out = {"vertex": out_v, "disp": out_d, "jumps": out_n, "t": t_grid}
    if surface is not None:
        out["increment"] = out_i
    if record_path:
        out["path"] = path
    return out


def walk(graph, start: int, t_max: float, seed: int, clock: str = "jump-rate") -> WalkTrace:
    """Single walk trace from ``start`` over ``[0, t_max]``."""
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    rng = substream(seed, "walk", start)
    res = simulate_walks(graph, [start], [t_max], rng, clock, record_path=True)
    times = np.array([p[0] for p in res["path"]])
    verts = np.array([int(p[1][0]) for p in res["path"]], dtype=np.int64)
    x0 = graph.positions[start]
    unwrapped = np.array([x0 + p[2][0] for p in res["path"]])
    return WalkTrace(times, verts, unwrapped, int(start), int(seed), float(t_max), clock)


def martingale_residual(deformed) -> float:
    """``max_s |sum_{s'} a(s, s') (H(s') - H(s))|`` over vertices and components."""
    g = deformed.graph
    dH = g.dir_disp + deformed.chi[g.indices] - deformed.chi[g.dir_src]
    drift = np.stack([np.bincount(g.dir_src, weights=dH[:, c], minlength=g.n) for c in range(g.d)], axis=1)
    return float(np.max(np.abs(drift))) if drift.size else 0.0


def _fit_through_origin(t, y):
    denom = float(t @ t)
    slope = float(t @ y) / denom if denom > 0 else 0.0
    resid = y - slope * t
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return slope, r2


def msd_diagnostic(deformed, n_walks: int = 500, t_max: float = 20.0, seed: int = 0,
                   n_times: int = 40) -> dict:
    """Mean-square displacement of ``H(Y_t)`` and a line fit through the origin.

    Walks start at uniformly chosen vertices and use the jump-rate clock.
    """
    if n_walks < 100:
        raise ValueError("n_walks must be at least 100")
    g = deformed.graph
    rng = substream(seed, "msd")
    starts = rng.integers(0, g.n, size=n_walks)
    t_grid = np.linspace(0.0, t_max, n_times + 1)
    res = simulate_walks(g, starts, t_grid, rng, "jump-rate")
    v = res["vertex"]
    dH = res["disp"] + deformed.chi[v] - deformed.chi[starts][:, None, :]
    sq = np.sum(dH**2, axis=2)
    msd = sq.mean(axis=0)
    msd_se = sq.std(axis=0, ddof=1) / math.sqrt(n_walks)
    slope, r2 = _fit_through_origin(t_grid, msd) if t_max > 0 else (0.0, 1.0)
    final = dH[:, -1, :]
    mean_disp = final.mean(axis=0)
    mean_se = final.std(axis=0, ddof=1) / math.sqrt(n_walks)
    return {
        "t": t_grid,
        "msd": msd,
        "msd_stderr": msd_se,
        "slope": slope,
        "r2": r2,
        "mean_displacement": mean_disp,
        "mean_displacement_stderr": mean_se,
        "n_walks": n_walks,
    }


def _batch_means_se(x, n_batches=50):
    n = x.shape[0]
    b = n // n_batches
    if b < 2:
        return float(x.std(ddof=1) / math.sqrt(max(n, 1))) if n > 1 else 0.0
    means = x[: b * n_batches].reshape(n_batches, b).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def environment_check(graph, f, n_steps: int = 10**6, seed: int = 0, backend=None) -> dict:
    """Time average of ``f`` along the embedded chain vs the degree-biased mean.

    ``f`` is an array of per-vertex values or a callable ``f(graph) -> array``.
    The chain starts from the degree-biased law; the standard error uses
    batch means.
    """
    values = np.asarray(f(graph) if callable(f) else f, dtype=float)
    a = graph.degree.astype(float)
    spatial = float(np.sum(a * values) / np.sum(a))
    rng = substream(seed, "environment")
    start = int(rng.choice(graph.n, p=a / a.sum()))
    uniforms = rng.random(n_steps)
    visits = kernels.embedded_chain(graph.indptr, graph.indices, start, uniforms, backend=backend)
    path = values[visits]
    time_avg = float(path.mean())
    se = _batch_means_se(path)
    return {
        "time_average": time_avg,
        "spatial_average": spatial,
        "difference": time_avg - spatial,
        "stderr": se,
        "n_steps": n_steps,
    }


def stirling2(r: int, k: int) -> int:
    row = [1]
    for n in range(1, r + 1):
        new = [0] * (n + 1)
        for j in range(1, n + 1):
            new[j] = j * (row[j] if j < len(row) else 0) + row[j - 1]
        row = new
    return row[k] if k < len(row) else 0


def poisson_moment(r: int, t: float) -> float:
    """Exact ``E[N^r]`` for ``N ~ Poisson(t)`` (Touchard polynomial)."""
    r = int(r)
    if r < 0:
        raise ValueError("r must be non-negative")
    if r == 0:
        return 1.0
    return float(sum(stirling2(r, k) * t**k for k in range(1, r + 1)))


def moment_check(graph, gamma: Surface, r: int = 2, t=(1.0, 2.0, 5.0), n_walks: int = 10**5,
                 seed: int = 0) -> dict:
    """Empirical ``E|gamma(X_t) - gamma(X_0)|^r`` against ``2 C(|grad gamma|^r) m^r(t)``.

    ``X`` is the uniformized walk started from the degree-biased law.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    t_grid = np.atleast_1d(np.asarray(t, dtype=float))
    c_r = campbell_power(gradient(gamma), r)
    rng = substream(seed, "moment")
    a = graph.degree.astype(float)
    starts = rng.choice(graph.n, size=n_walks, p=a / a.sum())
    res = simulate_walks(graph, starts, t_grid, rng, "uniformized", surface=gamma)
    powr = np.abs(res["increment"]) ** r
    emp = powr.mean(axis=0)
    se = powr.std(axis=0, ddof=1) / math.sqrt(n_walks)
    bound = np.array([2.0 * c_r * poisson_moment(r, tt) for tt in t_grid])
    sq = res["increment"] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(t_grid > 0, sq.mean(axis=0) / t_grid, 0.0)
    return {
        "r": r,
        "t": t_grid,
        "moment": emp,
        "stderr": se,
        "bound": bound,
        "ok": bool(np.all(emp <= bound + 4 * se)),
        "second_moment_over_t": ratio,
        "campbell_grad_r": c_r,
    }
