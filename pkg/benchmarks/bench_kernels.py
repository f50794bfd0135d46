"""Compare the compiled and pure-Python kernels on a Poisson torus.

Usage::

    python3 benchmarks/bench_kernels.py [--n 1000] [--t-max 20] [--repeat 3]

Prints the best-of-``repeat`` wall time of each kernel per backend, the
speedup, and whether both backends produced bit-identical output.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from harmonic_delaunay import kernels
from harmonic_delaunay.fields import Surface
from harmonic_delaunay.geometry import build_delaunay
from harmonic_delaunay.harness import energy, event_schedule
from harmonic_delaunay.pointprocess import sample_poisson, substream


def _best(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=1000, help="expected number of points")
    p.add_argument("--t-max", type=float, default=20.0)
    p.add_argument("--sweeps", type=int, default=200)
    p.add_argument("--steps", type=int, default=200_000)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    g = build_delaunay(sample_poisson(2, np.sqrt(args.n), 1.0, args.seed))
    gamma = Surface.affine(g, [1.0, 0.0])
    offset = gamma.offsets()
    _, order = event_schedule(g.n, args.t_max, substream(args.seed, "harness"))
    e0 = energy(gamma)
    uniforms = substream(args.seed, "environment").random(args.steps)

    def harness(backend):
        psi = np.zeros(g.n)
        en, _, _ = kernels.harness_events(g.indptr, g.indices, offset, psi, order, e0, 1 / g.volume, backend)
        return np.concatenate([psi, en])

    def relax(backend):
        psi = np.zeros(g.n)
        kernels.gauss_seidel(g.indptr, g.indices, offset, psi, args.sweeps, backend)
        return psi

    def chain(backend):
        return kernels.embedded_chain(g.indptr, g.indices, 0, uniforms, backend)

    cases = [
        (f"harness_events ({order.shape[0]} events)", harness),
        (f"gauss_seidel ({args.sweeps} sweeps)", relax),
        (f"embedded_chain ({args.steps} steps)", chain),
    ]
    backends = kernels.available_backends()
    print(f"graph: {g.n} vertices, {g.n_edges} edges; backends: {', '.join(backends)}")
    print(f"{'kernel':<36}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}{'identical':>11}")
    for name, fn in cases:
        times, outs = [], []
        for b in backends:
            t, out = _best(lambda: fn(b), args.repeat)
            times.append(t)
            outs.append(out)
        speed = times[-1] / times[0] if len(times) == 2 else 1.0
        same = all(np.array_equal(outs[0], o) for o in outs[1:])
        print(f"{name:<36}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times) + f"{speed:>9.1f}x{str(same):>11}")


if __name__ == "__main__":
    main()
