"""Build hook: compiles the optional fast kernel extension.

The package is fully functional without the extension (a pure-Python
fallback is selected at import time); the build therefore tolerates a
missing compiler or Cython and falls back to a pure-Python install.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/lipstep/_fastcore.pyx"],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - build-environment dependent
    print(f"lipstep: building without compiled kernels ({exc})")

setup(ext_modules=ext_modules)
