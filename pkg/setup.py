"""Build the optional compiled kernels.

    python setup.py build_ext --inplace

If compilation fails the package still installs and falls back to the
numpy kernels at import.
"""
import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "dartk.autodiff._ckernels",
        ["src/dartk/autodiff/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    ),
]

setup(ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}))
