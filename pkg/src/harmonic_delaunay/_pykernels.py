"""Pure-Python kernels.

Reference implementations of the compiled kernels in ``_ckernels.pyx``.
Both perform the same floating-point operations in the same order, so the
two backends agree bit-for-bit.
"""


def harness_events(indptr, indices, offset, psi, order, energy, inv_vol, energies, deltas):
    """Apply the mean-of-neighbours update at each vertex of ``order``.

    ``psi`` is updated in place.  ``energies[k]`` receives the running
    energy after event ``k`` and ``deltas[k]`` the directly computed local
    change of the energy caused by it.  Returns the final running energy.
    """
    ip = indptr.tolist()
    ix = indices.tolist()
    off = offset.tolist()
    p = psi.tolist()
    en = []
    de = []
    for s in order.tolist():
        lo = ip[s]
        hi = ip[s + 1]
        total = 0.0
        for e in range(lo, hi):
            total += p[ix[e]] + off[e]
        mean = total / (hi - lo)
        x = p[s]
        before = 0.0
        after = 0.0
        for e in range(lo, hi):
            y = p[ix[e]] + off[e]
            before += (y - x) * (y - x)
            after += (y - mean) * (y - mean)
        p[s] = mean
        delta = (after - before) * inv_vol
        energy += delta
        en.append(energy)
        de.append(delta)
    psi[:] = p
    energies[:] = en
    deltas[:] = de
    return energy


def gauss_seidel(indptr, indices, offset, psi, n_sweeps):
    """In-place Gauss-Seidel sweeps in vertex-index order."""
    ip = indptr.tolist()
    ix = indices.tolist()
    off = offset.tolist()
    p = psi.tolist()
    n = len(p)
    for _ in range(n_sweeps):
        for s in range(n):
            lo = ip[s]
            hi = ip[s + 1]
            total = 0.0
            for e in range(lo, hi):
                total += p[ix[e]] + off[e]
            p[s] = total / (hi - lo)
    psi[:] = p


def embedded_chain(indptr, indices, start, uniforms, visits):
    """Discrete-time walk choosing a uniform neighbour at every step.

    ``visits[k]`` is the vertex after step ``k``; returns the final vertex.
    """
    ip = indptr.tolist()
    ix = indices.tolist()
    v = int(start)
    out = []
    for u in uniforms.tolist():
        lo = ip[v]
        deg = ip[v + 1] - lo
        k = int(u * deg)
        if k >= deg:
            k = deg - 1
        v = ix[lo + k]
        out.append(v)
    visits[:] = out
    return v
