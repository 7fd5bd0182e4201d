# Builds the optional compiled sampling kernel. Without a compiler or Cython
# the package still installs and falls back to the numpy implementation.
import sys

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "semicurv._warp_ext",
                ["src/semicurv/_warp_ext.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError as exc:
    print(f"skipping compiled kernels: {exc}", file=sys.stderr)

setup(ext_modules=ext_modules)
