"""Build script for the optional compiled iteration kernels.

The package works without the extension (a NumPy fallback is selected at
import time); set MDES_NO_EXT=1 to skip compilation entirely.
"""
import os

from setuptools import Extension, setup

extensions = []
if not os.environ.get("MDES_NO_EXT"):
    import numpy
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "mdes._speedups",
                ["src/mdes/_speedups.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions)
