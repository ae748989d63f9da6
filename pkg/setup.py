"""Build script for the optional compiled simulation kernel.

The package works without the extension (a pure-Python kernel is selected
at import time), so a missing compiler or Cython only costs speed.
"""

import os

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    numpy_random_lib = os.path.join(os.path.dirname(numpy.random.__file__), "lib")
    ext = Extension(
        "decusum._speedups",
        ["src/decusum/_speedups.pyx"],
        include_dirs=[numpy.get_include()],
        library_dirs=[numpy_random_lib],
        libraries=["npyrandom"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # -ffp-contract=off: the pure-Python fallback must produce bitwise
        # identical statistics, so FMA contraction is disabled.
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
    ext_modules = cythonize([ext], language_level=3)

setup(ext_modules=ext_modules)
