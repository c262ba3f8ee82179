"""Build script.

The compiled kernel (viscofit._kernel_cy) is optional: if Cython or a C
compiler is unavailable the package installs pure-Python and selects the
NumPy kernel at import time.
"""

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the Cython kernel if possible, otherwise skip it."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # missing compiler, etc.
            print(f"viscofit: skipping compiled kernel ({exc!r}); "
                  "falling back to the NumPy kernel")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"viscofit: could not build {ext.name} ({exc!r}); "
                  "falling back to the NumPy kernel")


def extensions():
    try:
        import scipy  # noqa: F401  (cython_blas provides the dgemm binding)
        from Cython.Build import cythonize
    except ImportError as exc:
        print(f"viscofit: building without the compiled kernel ({exc})")
        return []
    from setuptools import Extension
    ext = Extension(
        "viscofit._kernel_cy",
        sources=["src/viscofit/_kernel_cy.pyx"],
        extra_compile_args=["-O3"],
    )
    try:
        return cythonize([ext], language_level="3")
    except Exception as exc:
        print(f"viscofit: building without the compiled kernel ({exc})")
        return []


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
