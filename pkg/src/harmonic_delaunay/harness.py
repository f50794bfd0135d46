"""Zero-temperature harness process on a finite Delaunay graph.

Every vertex carries a rate-1 exponential clock; when it rings the height
at that vertex is replaced by the mean of its neighbours' heights.  The
tilt ``c`` of the surface is structural and never changes: only the
periodic part ``psi`` evolves.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .fields import Surface, campbell_mean, gradient, laplacian, tilt_J
from .pointprocess import substream
from .randomwalk import simulate_walks

__all__ = [
    "HarnessState",
    "backward_walk_estimate",
    "energy",
    "event_schedule",
    "harness_run",
    "m_s_update",
]

RECOMPUTE_EVERY = 10_000
RECOMPUTE_RTOL = 1e-9
CHUNK_EVENTS = 1 << 17


class HarnessError(RuntimeError):
    pass


def energy(eta: Surface) -> float:
    """``C(|grad eta|^2)``."""
    g = gradient(eta)
    return campbell_mean(g, g)


def m_s_update(eta: Surface, s: int) -> Surface:
    """Copy of ``eta`` with the height at ``s`` set to its neighbours' mean."""
    g = eta.graph
    lo, hi = g.indptr[s], g.indptr[s + 1]
    if hi == lo:
        raise HarnessError(f"vertex {s} is isolated")
    out = eta.copy()
    vals = eta.psi[g.indices[lo:hi]] + g.dir_disp[lo:hi] @ eta.tilt
    total = 0.0
    for v in vals:
        total += v
    out.psi[s] = total / (hi - lo)
    return out


class _Clocks:
    """Per-vertex rate-1 exponential clocks, advanced window by window."""

    def __init__(self, n: int, rng: np.random.Generator):
        self.rng = rng
        self.clock = rng.exponential(size=n)

    def advance(self, t_hi: float):
        """All epochs up to ``t_hi`` not yet returned, merged in time order."""
        times, verts = [], []
        alive = np.arange(self.clock.shape[0])
        while alive.size:
            alive = alive[self.clock[alive] <= t_hi]
            if not alive.size:
                break
            times.append(self.clock[alive].copy())
            verts.append(alive.copy())
            self.clock[alive] += self.rng.exponential(size=alive.size)
        if not times:
            return np.empty(0), np.empty(0, dtype=np.int64)
        t = np.concatenate(times)
        v = np.concatenate(verts)
        order = np.argsort(t, kind="stable")
        return t[order], v[order].astype(np.int64)


def event_schedule(n: int, t_max: float, rng: np.random.Generator):
    """Superposed epochs of ``n`` independent rate-1 Poisson clocks on ``[0, t_max]``.

    Each vertex draws exponential gaps until its clock passes ``t_max``;
    the events are then merged in time order.  Returns (times, vertices).
    """
    return _Clocks(n, rng).advance(t_max)


@dataclass
class HarnessState:
    surface: Surface
    t: float
    n_events: int
    event_times: np.ndarray
    event_vertices: np.ndarray
    energy0: float
    energies: np.ndarray
    deltas: np.ndarray
    checkpoints: list = field(default_factory=list)
    seed: int | None = None
    stopped_early: bool = False
    backend: str = ""

    @property
    def tilt(self):
        return self.surface.tilt

    def energy_trace(self) -> np.ndarray:
        """Energy before any event followed by the energy after each event."""
        return np.concatenate([[self.energy0], self.energies])


def _checkpoint(eta, k, t, running):
    lap = laplacian(eta)
    row = {
        "event": int(k),
        "t": float(t),
        "energy": float(running),
        "max_laplacian_abs": float(np.max(np.abs(lap))) if lap.size else 0.0,
    }
    g = eta.graph
    if g.mode == "periodic" and g.facet is not None:
        row["tilt"] = [tilt_J(eta, u) for u in range(g.d)]
    return row


def harness_run(graph, gamma: Surface, t_max: float, seed: int, checkpoint_every: int = 1000,
                stop_tol: float | None = None, backend: str | None = None,
                recompute_every: int = RECOMPUTE_EVERY) -> HarnessState:
    """Run the harness from ``gamma`` up to time ``t_max``.

    Checkpoints (energy, max |Laplacian|, tilt) are recorded every
    ``checkpoint_every`` events.  The running energy is recomputed from
    scratch every ``recompute_every`` events and must agree to 1e-9
    relative.  With ``stop_tol`` the run halts early at the first checkpoint
    where every vertex has fired since the previous check and the max
    Laplacian is below ``stop_tol``.
    """
    if not t_max > 0:
        raise HarnessError("t_max must be positive")
    if graph.n and graph.degree.min() == 0:
        raise HarnessError("graph has an isolated vertex")
    rng = substream(seed, "harness")
    clocks = _Clocks(graph.n, rng)
    # events are drawn in time windows of about CHUNK_EVENTS so that long runs with an
    # early stop never materialize the full schedule
    window = max(CHUNK_EVENTS / max(graph.n, 1), 1e-3)
    eta = gamma.copy()
    psi = np.ascontiguousarray(eta.psi, dtype=float)
    eta.psi = psi
    offset = eta.offsets()
    inv_vol = 1.0 / graph.volume
    running = energy(eta)
    e0 = running
    checkpoints = [_checkpoint(eta, 0, 0.0, running)]
    all_t, all_v, all_e, all_d = [], [], [], []
    fired = np.zeros(graph.n, dtype=bool)
    k = 0
    t_last = 0.0
    T = 0.0
    stopped = False
    while T < t_max and not stopped:
        T = min(t_max, T + window)
        times, verts = clocks.advance(T)
        pos = 0
        while pos < times.shape[0]:
            nxt = min(k + checkpoint_every - k % checkpoint_every,
                      k + recompute_every - k % recompute_every)
            stop = min(times.shape[0], pos + nxt - k)
            en, de, running = kernels.harness_events(graph.indptr, graph.indices, offset, psi,
                                                     verts[pos:stop], running, inv_vol, backend)
            all_t.append(times[pos:stop])
            all_v.append(verts[pos:stop])
            all_e.append(en)
            all_d.append(de)
            fired[verts[pos:stop]] = True
            k += stop - pos
            t_last = float(times[stop - 1])
            pos = stop
            if k % recompute_every == 0:
                running = _recompute(eta, running)
            if k % checkpoint_every == 0:
                cp = _checkpoint(eta, k, t_last, running)
                checkpoints.append(cp)
                if stop_tol is not None and fired.all():
                    if cp["max_laplacian_abs"] < stop_tol:
                        stopped = True
                        break
                    fired[:] = False
    if not stopped and k % recompute_every:
        running = _recompute(eta, running)
    if not stopped and k % checkpoint_every:
        checkpoints.append(_checkpoint(eta, k, t_last, running))
    return HarnessState(
        surface=eta,
        t=t_last if stopped else float(t_max),
        n_events=k,
        event_times=_cat(all_t, float),
        event_vertices=_cat(all_v, np.int64),
        energy0=e0,
        energies=_cat(all_e, float),
        deltas=_cat(all_d, float),
        checkpoints=checkpoints,
        seed=seed,
        stopped_early=stopped,
        backend=backend or kernels.BACKEND,
    )


def _cat(parts, dtype):
    return np.concatenate(parts) if parts else np.empty(0, dtype=dtype)


def _recompute(eta, running):
    full = energy(eta)
    if abs(full - running) > RECOMPUTE_RTOL * max(abs(full), 1e-300) + 1e-15:
        raise HarnessError(f"incremental energy drifted: {running!r} vs {full!r}")
    return full


def backward_walk_estimate(graph, gamma: Surface, s: int, t: float, n_samples: int, seed: int):
    """Monte Carlo ``sum_{s'} p_t(s, s') gamma(s')`` with rate-1 backward walks.

    Returns ``(mean, stderr)``.  The estimate is annealed: it is the
    expectation of the harness height at ``s`` over the clocks.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    base = float(gamma.heights[s])
    if t == 0:
        return base, 0.0
    rng = substream(seed, "backward-walk", s)
    res = simulate_walks(graph, np.full(n_samples, s), [t], rng, "uniformized", surface=gamma)
    vals = base + res["increment"][:, 0]
    se = float(vals.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else 0.0
    return float(vals.mean()), se
