import os

import numpy as np
from setuptools import Extension, setup

# The extension is optional: the package falls back to pure Python if it is
# absent. HAMH_NO_EXT=1 skips the build entirely; HAMH_PORTABLE=1 drops the
# native-arch and vector libm flags.


def _flags():
    # vector libm (glibc libmvec) needs fast-math plus a native target
    flags = ["-O3", "-fopenmp-simd"]
    if not os.environ.get("HAMH_PORTABLE"):
        flags += ["-march=native", "-ffast-math"]
    return flags


def _link():
    return [] if os.environ.get("HAMH_PORTABLE") else ["-lmvec"]


ext_modules = []
if not os.environ.get("HAMH_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "hamh.kernels._ext",
                    ["src/hamh/kernels/_ext.pyx"],
                    include_dirs=[np.get_include(), "src/hamh/kernels"],
                    extra_compile_args=_flags(),
                    extra_link_args=_link(),
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
