"""Z-sweep kernels.

The compiled Cython module is used when it is importable; otherwise the numpy
fallback is selected.  Set ``NHFA_FORCE_PYTHON=1`` to force the fallback.
Both consume one pre-drawn uniform per (row, column) so that they follow the
same random path.
"""
import os

from . import _fallback as python_backend

try:
    from . import _zsweep as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

if compiled_backend is not None and os.environ.get("NHFA_FORCE_PYTHON") != "1":
    BACKEND = "cython"
    _impl = compiled_backend
else:
    BACKEND = "python"
    _impl = python_backend

pgm_z_sweep = _impl.pgm_z_sweep
ggm_z_sweep = _impl.ggm_z_sweep


def get_backend(name: str):
    """Return the kernel module for ``"cython"`` or ``"python"``."""
    if name == "python":
        return python_backend
    if name == "cython":
        if compiled_backend is None:
            raise ImportError("compiled kernels are not built")
        return compiled_backend
    raise ValueError(f"unknown backend {name!r}")
