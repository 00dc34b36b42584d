import os

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """The compiled kernels are optional; fsnid falls back to numpy without them."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            self.warn(f"fsnid: compiled kernels not built ({exc}); using numpy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            self.warn(f"fsnid: failed to build {ext.name} ({exc}); using numpy fallback")


def extensions():
    if os.environ.get("FSNID_NO_EXTENSION"):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    from setuptools import Extension

    ext = Extension(
        "fsnid._kernels",
        ["src/fsnid/_kernels.pyx"],
        include_dirs=[np.get_include(), "src/fsnid"],
        depends=["src/fsnid/_dv_inner.h"],
        extra_compile_args=["-O3", "-fno-trapping-math", "-fno-math-errno"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
