"""Build script: compiles the warp kernel extension when Cython and a C
compiler are available.  The package works without it (NumPy fallback)."""

from setuptools import Extension, setup


def extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "forgescore.kernels._warp_cy",
        ["src/forgescore/kernels/_warp_cy.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # keep float arithmetic bit-compatible with the NumPy fallback
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions())
