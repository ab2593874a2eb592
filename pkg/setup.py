from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# The compiled kernel is optional: without it the package falls back to the
# pure-Python implementation in gr3dkit._kernels.overlap_py at import time.
ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "gr3dkit._kernels.overlap",
                ["src/gr3dkit/_kernels/overlap.pyx"],
                extra_compile_args=["-O2"],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )

setup(ext_modules=ext_modules)
