"""Build the optional compiled kernels.

The Cython extension is skipped (with a warning) when Cython or a C compiler
is unavailable; the package then runs on the numpy fallback.
"""
import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext

OPENMP = ["-fopenmp"] if sys.platform.startswith("linux") else []


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            print(f"warning: compiled kernels not built ({exc}); using fallback",
                  file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
            return
        except Exception as exc:  # noqa: BLE001
            print(f"warning: OpenMP build of {ext.name} failed ({exc}); retrying serial",
                  file=sys.stderr)
        ext.extra_compile_args = [a for a in ext.extra_compile_args if a not in OPENMP]
        ext.extra_link_args = [a for a in ext.extra_link_args if a not in OPENMP]
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"warning: failed to build {ext.name} ({exc})", file=sys.stderr)


def _extensions():
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        return []
    ext = Extension(
        "ddident._kernels",
        ["src/ddident/_kernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=list(OPENMP),
        extra_link_args=list(OPENMP),
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=_extensions(), cmdclass={"build_ext": OptionalBuildExt})
