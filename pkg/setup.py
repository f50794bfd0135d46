"""Build the optional Cython kernels.

The package works without them: ``harmonic_delaunay.kernels`` falls back to
the pure-Python implementations when the extension cannot be imported.
"""
from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension
except ImportError:
    pass
else:
    ext_modules = cythonize(
        [
            Extension(
                "harmonic_delaunay._ckernels",
                ["src/harmonic_delaunay/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                # no fast-math / contraction: results must match the fallback bit-for-bit
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )

setup(ext_modules=ext_modules)
