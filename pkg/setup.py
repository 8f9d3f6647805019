from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
    ext_modules = cythonize(
        [Extension("hanzawa_mhd._ext._pairsum", ["src/hanzawa_mhd/_ext/_pairsum.pyx"],
                   extra_compile_args=["-O3"], optional=True)],
        compiler_directives={"language_level": 3},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
