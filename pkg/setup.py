"""Build script for the optional compiled kernel core.

The package is fully functional without the extension (a numpy fallback is
selected at import time), so a failed compile downgrades to a warning
instead of aborting the install.
"""

import sys

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None


def extensions():
    if cythonize is None:
        print("tilecert: Cython not available, skipping compiled kernels", file=sys.stderr)
        return []
    ext = Extension(
        "tilecert._kernels._core",
        ["src/tilecert/_kernels/_core.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # No -ffast-math, and no FMA contraction: the scene kernels must
        # produce bit-identical doubles in both engines, and gcc contracts
        # a*b+c into fma() by default at -O3.
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions())
