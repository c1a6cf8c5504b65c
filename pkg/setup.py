"""Build script: compiles the optional native kernel extension.

The package is fully functional without the extension (a numpy fallback is
selected at import time), so any failure here downgrades to a pure-Python
install instead of aborting.
"""

import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """build_ext that warns instead of failing when no compiler is usable."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001 - any build failure is non-fatal
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(
            f"warning: native kernel build skipped ({exc}); "
            "falling back to the pure-Python kernels",
            file=sys.stderr,
        )


def native_extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        print("warning: Cython not available; building without native kernels",
              file=sys.stderr)
        return []
    ext = Extension(
        "tokmerge._kernels._native",
        ["src/tokmerge/_kernels/_native.pyx"],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level=3)


setup(
    ext_modules=native_extensions(),
    cmdclass={"build_ext": optional_build_ext},
)
