import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# no -ffast-math: the compiled kernels must agree with the numpy fallback
extensions = [
    Extension(
        "fpsi._kernels._ckernels",
        ["src/fpsi/_kernels/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O2"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
