"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``HARMONIC_DELAUNAY_PURE`` is set to a non-empty value
other than ``0``, the pure-Python fallback is used.  Call sites go through
the thin wrappers below, which normalise array dtypes and layout.
"""
from __future__ import annotations

import os

import numpy as np

from . import _pykernels

_force_pure = os.environ.get("HARMONIC_DELAUNAY_PURE", "") not in ("", "0")

_compiled = None
if not _force_pure:
    try:
        from . import _ckernels as _compiled
    except ImportError:  # pragma: no cover - depends on build
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"


def available_backends() -> list[str]:
    return ["cython", "python"] if _compiled is not None else ["python"]


def _impl(backend):
    backend = backend or BACKEND
    if backend == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        return _compiled
    if backend == "python":
        return _pykernels
    raise ValueError(f"unknown backend {backend!r}")


def _i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def harness_events(indptr, indices, offset, psi, order, energy, inv_vol, backend=None):
    """Run the event sequence ``order``; returns (energies, deltas, final energy).

    ``psi`` must be a contiguous float64 array; it is updated in place.
    """
    order = _i64(order)
    energies = np.empty(order.shape[0])
    deltas = np.empty(order.shape[0])
    final = _impl(backend).harness_events(_i64(indptr), _i64(indices), _f64(offset), psi, order,
                                          float(energy), float(inv_vol), energies, deltas)
    return energies, deltas, final


def gauss_seidel(indptr, indices, offset, psi, n_sweeps, backend=None):
    _impl(backend).gauss_seidel(_i64(indptr), _i64(indices), _f64(offset), psi, int(n_sweeps))


def embedded_chain(indptr, indices, start, uniforms, backend=None):
    uniforms = _f64(uniforms)
    visits = np.empty(uniforms.shape[0], dtype=np.int64)
    _impl(backend).embedded_chain(_i64(indptr), _i64(indices), int(start), uniforms, visits)
    return visits
