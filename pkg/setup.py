import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "sparsetouch._smo",
                ["src/sparsetouch/_smo.pyx"],
                include_dirs=[np.get_include()],
                # keep strict IEEE rounding so the compiled loop tracks the
                # numpy fallback bit for bit (no fused multiply-add)
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
