"""Select the compiled sweep kernel when available, else the numpy fallback.

Set ``COVSEL_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _sweep_py

BACKEND = "python"
mm_sweep = _sweep_py.mm_sweep

if os.environ.get("COVSEL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _sweep
    except ImportError:
        pass
    else:
        mm_sweep = _sweep.mm_sweep
        BACKEND = "cython"


def get_kernel(backend=None):
    """Return ``(name, mm_sweep)`` for ``backend`` in {None, "python", "cython"}."""
    if backend is None:
        return BACKEND, mm_sweep
    if backend == "python":
        return "python", _sweep_py.mm_sweep
    if backend == "cython":
        from . import _sweep

        return "cython", _sweep.mm_sweep
    raise ValueError(f"unknown backend {backend!r}")
