import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# No -ffast-math / FMA contraction: the kernels must reproduce the numpy
# fallback's distance arithmetic bit-for-bit.
extensions = [
    Extension(
        "vffr.pcops._kernels",
        ["src/vffr/pcops/_kernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
