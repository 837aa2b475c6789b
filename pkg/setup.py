"""Build script for the compiled tree kernel.

The package works without the extension (a pure-Python kernel is selected
at import time), but the compiled kernel is what makes ensemble fitting
fast enough for interactive use.
"""

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "poroforest._kernels._ctree",
        ["src/poroforest/_kernels/_ctree.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # no FP contraction: the compiled kernel must round exactly like the
        # pure-Python reference, one operation at a time
        extra_compile_args=["-O2", "-ffp-contract=off"],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
