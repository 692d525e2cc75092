import os
from ctypes.util import find_library

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python fallback only
    cythonize = None

# glibc's vector math library lets -ffast-math vectorize exp in the dense kernels
_vector_math = find_library("mvec") is not None

ext_modules = []
if cythonize is not None and not os.environ.get("RSMNCE_NO_EXT"):
    common = dict(
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    ext_modules = cythonize(
        [
            # sampling stays exact so it matches the numpy fallback draw for draw
            Extension("rsmnce._kernels", ["src/rsmnce/_kernels.pyx"], extra_compile_args=["-O3"], **common),
            Extension(
                "rsmnce._dense",
                ["src/rsmnce/_dense.pyx"],
                extra_compile_args=["-O3", "-ffast-math"] if _vector_math else ["-O3"],
                libraries=["mvec", "m"] if _vector_math else [],
                **common,
            ),
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )

setup(ext_modules=ext_modules)
