"""Builds the optional compiled kernels. Without Cython or a C compiler the
package still installs and runs on the numpy fallback."""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("CRASHPRINT_NO_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("crashprint._core._kernels", ["src/crashprint/_core/_kernels.pyx"],
                       include_dirs=[numpy.get_include()],
                       define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                       extra_compile_args=["-O3"])],
            compiler_directives={"language_level": 3},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
