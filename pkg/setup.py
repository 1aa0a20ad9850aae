"""Build script.

The ODE stepper used for Hamiltonian flows is the hot spot of the whole
package, so it ships as an optional Cython extension.  When Cython or a C
compiler is missing the build still succeeds and the package falls back to
the pure-Python stepper in ``barriertop._kernels.pyfallback``.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "barriertop._kernels._native",
                ["src/barriertop/_kernels/_native.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
