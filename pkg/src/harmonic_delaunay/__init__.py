"""Harmonic deformation of periodic Delaunay triangulations.

The harmonic surface with tilt ``c`` on a Poisson-Delaunay graph is
computed two ways: by running the zero-temperature harness process (every
vertex repeatedly moves to the mean of its neighbours) and by solving the
graph Laplace equation directly.
"""
__version__ = "0.1.0"

from .energy import barycenter_argmin, regularization_functional, triangle_orientation, zeta_pm
from .fields import (
    EdgeField,
    Surface,
    campbell_mean,
    divergence,
    gradient,
    integration_by_parts_check,
    laplacian,
    mass_transport_check,
    tilt_I_pointwise,
    tilt_J,
)
from .geometry import DelaunayGraph, VoronoiLocator, assumption_diagnostics, build_delaunay, omega_field
from .harness import HarnessState, backward_walk_estimate, energy, harness_run, m_s_update
from .kernels import BACKEND
from .pointprocess import PointSet, load_points, sample_poisson, save_points
from .randomwalk import environment_check, martingale_residual, moment_check, msd_diagnostic, walk
from .solver import DeformedGraph, SolverReport, corrector, deform, solve_harmonic, sublinearity_scan

__all__ = [
    "BACKEND",
    "DeformedGraph",
    "DelaunayGraph",
    "EdgeField",
    "HarnessState",
    "PointSet",
    "SolverReport",
    "Surface",
    "VoronoiLocator",
    "assumption_diagnostics",
    "backward_walk_estimate",
    "barycenter_argmin",
    "build_delaunay",
    "campbell_mean",
    "corrector",
    "deform",
    "divergence",
    "energy",
    "environment_check",
    "gradient",
    "harness_run",
    "integration_by_parts_check",
    "laplacian",
    "load_points",
    "m_s_update",
    "martingale_residual",
    "mass_transport_check",
    "moment_check",
    "msd_diagnostic",
    "omega_field",
    "regularization_functional",
    "sample_poisson",
    "save_points",
    "solve_harmonic",
    "sublinearity_scan",
    "tilt_I_pointwise",
    "tilt_J",
    "triangle_orientation",
    "walk",
    "zeta_pm",
]
