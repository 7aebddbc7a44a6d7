import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("ZOOMCTL_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext = Extension(
            "zoomctl._ckernel",
            ["src/zoomctl/_ckernel.pyx"],
            extra_compile_args=["-O3", "-ffp-contract=off"],
            optional=True,
        )
        ext_modules = cythonize(
            [ext], language_level=3, compiler_directives={"boundscheck": False, "wraparound": False}
        )

setup(ext_modules=ext_modules)
