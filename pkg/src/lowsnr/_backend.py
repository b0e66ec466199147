"""Kernel backend chosen at import: the compiled extension when it is built,
otherwise the pure-Python twins. ``LOWSNR_BACKEND=python`` forces the fallback."""
import os

from . import _kernels_py

BACKEND = "python"
kernels = _kernels_py

if os.environ.get("LOWSNR_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as kernels  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass


def get_kernels(name=None):
    """Kernel module by name (``"cython"`` or ``"python"``); default is the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")
