"""Kernel backend selection.

The compiled module is used when it imports; ``HJSOLVE_BACKEND=python``
forces the numpy fallback (useful for benchmarking and debugging).
"""
import os

from . import _mlp_kernels_py

BACKEND = "python"
_kernels = _mlp_kernels_py

if os.environ.get("HJSOLVE_BACKEND", "").lower() != "python":
    try:
        from . import _mlp_kernels as _compiled
    except ImportError:
        pass
    else:
        _kernels = _compiled
        BACKEND = "cython"

mlp_forward = _kernels.mlp_forward
mlp_backward = _kernels.mlp_backward


def get_kernels(name=None):
    """Return the kernel module by name (``"cython"``/``"python"``) or the active one."""
    if name is None:
        return _kernels
    if name == "python":
        return _mlp_kernels_py
    if name == "cython":
        from . import _mlp_kernels

        return _mlp_kernels
    raise ValueError(f"unknown backend {name!r}")
