"""Build script: compiles the Cython integrator kernel when a toolchain is
available. The package falls back to the pure-Python kernel at import time
if the extension is missing, so a failed compile is not fatal."""

from setuptools import setup

try:
    from Cython.Build import cythonize
    import numpy as np

    ext_modules = cythonize(
        "src/epiops/_kernel/_rk4.pyx",
        compiler_directives={"language_level": "3"},
    )
    include_dirs = [np.get_include()]
except ImportError:
    ext_modules = []
    include_dirs = []

setup(ext_modules=ext_modules, include_dirs=include_dirs)
