"""Kernel backend selection.

The compiled extension is used when it imports; set ``UZIP_PURE_PYTHON=1``
to force the numpy implementation.
"""

from __future__ import annotations

import os
from types import ModuleType

from uzip import _pykernels

python_kernels: ModuleType = _pykernels
compiled_kernels: ModuleType | None

try:
    from uzip import _ckernels as compiled_kernels
except ImportError:  # extension not built
    compiled_kernels = None

if compiled_kernels is not None and not os.environ.get("UZIP_PURE_PYTHON"):
    kernels: ModuleType = compiled_kernels
    BACKEND = "cython"
else:
    kernels = python_kernels
    BACKEND = "python"


def get_kernels(name: str | None = None) -> ModuleType:
    """Return the kernel module for ``name`` ("cython"/"python"), default active."""
    if name is None:
        return kernels
    if name == "python":
        return python_kernels
    if name == "cython":
        if compiled_kernels is None:
            raise ImportError("compiled kernels are not built")
        return compiled_kernels
    raise ValueError(f"unknown backend {name!r}")
