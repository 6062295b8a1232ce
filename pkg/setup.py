"""Builds the optional compiled range-coder core.

The package works without it (a pure-Python coder is selected at import
time); building the extension just makes entropy coding much faster.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/ssbcodec/rc/_rc.pyx"],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - build-env dependent
    import sys

    print(f"ssbcodec: skipping compiled coder ({exc}); "
          "pure-Python fallback will be used", file=sys.stderr)

setup(ext_modules=ext_modules)
