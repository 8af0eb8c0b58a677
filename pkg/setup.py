import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

# -ffp-contract=off: the pure-numpy fallback must stay bit-identical to the
# compiled kernels, and FMA contraction changes round-half-up tie results.
setup(
    ext_modules=cythonize(
        [
            Extension(
                "advcf._blendcore",
                ["src/advcf/_blendcore.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )
)
