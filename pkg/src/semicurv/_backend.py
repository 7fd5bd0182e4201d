"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy fallback.
Set ``SEMICURV_BACKEND=python`` to force the fallback.
"""

import os

from . import _warp_py

BACKEND = "python"
kernels = _warp_py

if os.environ.get("SEMICURV_BACKEND", "").lower() != "python":
    try:
        from . import _warp_ext
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "cython"
        kernels = _warp_ext


def get_kernels(name=None):
    """Return the kernel module for ``name`` ('cython' or 'python'), or the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _warp_py
    if name == "cython":
        from . import _warp_ext

        return _warp_ext
    raise ValueError(f"unknown backend {name!r}")
