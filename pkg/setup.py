"""Build script for the optional compiled kernel extension.

The package works without the extension (a numpy fallback is selected at
import time), so failures here are tolerated: we build the Cython module
when Cython and a C compiler are available and otherwise install the pure
Python package.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "odyn.tensor._kernels",
                sources=["src/odyn/tensor/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
