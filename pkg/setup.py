"""Build script for the optional compiled fit kernel.

The package is pure Python except for ``csabench._fit._kernel``, a Cython
extension accelerating the Hill-curve fitting inner loop. If Cython or a C
compiler is unavailable the build degrades to a pure wheel and the package
falls back to the numpy kernel at import time.
"""

import os

from setuptools import setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Let extension build failures degrade to a pure-Python install."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        import warnings

        warnings.warn(
            f"csabench: compiled fit kernel not built ({exc}); "
            "the pure-Python kernel will be used instead"
        )


ext_modules = []
if not os.environ.get("CSABENCH_PURE_PYTHON"):
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "csabench._fit._kernel",
                    ["src/csabench/_fit/_kernel.pyx"],
                )
            ],
            language_level=3,
            quiet=True,
        )
    except ImportError:
        pass

setup(ext_modules=ext_modules, cmdclass={"build_ext": optional_build_ext})
