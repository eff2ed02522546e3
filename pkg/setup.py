"""Build the optional compiled kernel loops; the package works without them."""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("BERGSCALE_NO_EXT", "") not in ("1", "true", "yes"):
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("bergscale._kernels", ["src/bergscale/_kernels.pyx"], extra_compile_args=["-O3", "-fopenmp"], extra_link_args=["-fopenmp"])],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
