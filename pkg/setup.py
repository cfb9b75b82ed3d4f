"""Build script: compiles the optional fast kernels.

The package works without the extension (a numpy fallback is selected at
import time), so the build is best-effort: no Cython or no compiler simply
means the pure-Python backend is used.
"""

import os

from setuptools import Extension, setup

ext_modules = []
try:
    if not os.path.exists("src/nomaq/_speedups.pyx"):
        raise ImportError("kernel sources not present")
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "nomaq._speedups",
                sources=["src/nomaq/_speedups.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": 3},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
