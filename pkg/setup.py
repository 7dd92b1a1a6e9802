"""Build script for the optional compiled kernels.

The package is fully functional without the extension: if Cython or a C
compiler is unavailable the build simply skips the extension and the
pure-NumPy kernels are used at runtime.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover - build-time only
    cythonize = None

extensions = [
    Extension(
        "setmatch._fastloops",
        sources=["src/setmatch/_fastloops.pyx"],
    )
]

setup(
    ext_modules=cythonize(extensions, language_level="3") if cythonize else [],
)
