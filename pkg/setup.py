import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("LOWSNR_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [Extension("lowsnr._kernels", ["src/lowsnr/_kernels.pyx"], include_dirs=[np.get_include()],
                       define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")])],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
