"""Build script for the optional compiled kernel core.

The package works without the extension (a pure-numpy fallback is selected
at import time); building it speeds up the hot loops considerably.

    pip install -e . --no-build-isolation
or
    python setup.py build_ext --inplace
"""

from pathlib import Path

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    if not Path("src/gatepilot/_kernels/_core.pyx").exists():
        raise ImportError
    ext_modules = cythonize(
        [
            Extension(
                "gatepilot._kernels._core",
                ["src/gatepilot/_kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                # no -ffast-math: run-to-run determinism matters more than speed
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
