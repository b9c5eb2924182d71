"""Build script: compiles the optional Cython kernel core.

The package works without the extension (a numpy fallback is selected at
import time), so any failure here degrades to a pure-Python install
instead of aborting.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("GKD_NO_EXT", "") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "gkdefl._kernels._core",
                    ["src/gkdefl/_kernels/_core.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except Exception as exc:  # noqa: BLE001 - any build problem falls back to pure Python
        print(f"gkdefl: skipping compiled kernels ({exc!r}); pure-Python fallback will be used")
        ext_modules = []

setup(ext_modules=ext_modules)
