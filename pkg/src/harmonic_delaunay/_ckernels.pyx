# cython: language_level=3
"""Compiled kernels; see ``_pykernels.py`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t

cnp.import_array()


def harness_events(const int64_t[::1] indptr, const int64_t[::1] indices,
                   const double[::1] offset, double[::1] psi,
                   const int64_t[::1] order, double energy, double inv_vol,
                   double[::1] energies, double[::1] deltas):
    cdef Py_ssize_t k, e, lo, hi, s
    cdef Py_ssize_t n_events = order.shape[0]
    cdef double total, mean, x, y, before, after, delta
    with nogil:
        for k in range(n_events):
            s = order[k]
            lo = indptr[s]
            hi = indptr[s + 1]
            total = 0.0
            for e in range(lo, hi):
                total = total + (psi[indices[e]] + offset[e])
            mean = total / <double>(hi - lo)
            x = psi[s]
            before = 0.0
            after = 0.0
            for e in range(lo, hi):
                y = psi[indices[e]] + offset[e]
                before = before + (y - x) * (y - x)
                after = after + (y - mean) * (y - mean)
            psi[s] = mean
            delta = (after - before) * inv_vol
            energy = energy + delta
            energies[k] = energy
            deltas[k] = delta
    return energy


def gauss_seidel(const int64_t[::1] indptr, const int64_t[::1] indices,
                 const double[::1] offset, double[::1] psi, Py_ssize_t n_sweeps):
    cdef Py_ssize_t it, s, e, lo, hi
    cdef Py_ssize_t n = psi.shape[0]
    cdef double total
    with nogil:
        for it in range(n_sweeps):
            for s in range(n):
                lo = indptr[s]
                hi = indptr[s + 1]
                total = 0.0
                for e in range(lo, hi):
                    total = total + (psi[indices[e]] + offset[e])
                psi[s] = total / <double>(hi - lo)


def embedded_chain(const int64_t[::1] indptr, const int64_t[::1] indices,
                   int64_t start, const double[::1] uniforms, int64_t[::1] visits):
    cdef Py_ssize_t k, lo, deg, j
    cdef Py_ssize_t n_steps = uniforms.shape[0]
    cdef int64_t v = start
    with nogil:
        for k in range(n_steps):
            lo = indptr[v]
            deg = indptr[v + 1] - lo
            j = <Py_ssize_t>(uniforms[k] * deg)
            if j >= deg:
                j = deg - 1
            v = indices[lo + j]
            visits[k] = v
    return v
