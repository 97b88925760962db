"""Backend selection for the fused cycle kernel.

The compiled extension is used when it imports; set ``SPINFEEDBACK_PURE=1``
to force the numpy fallback.
"""
from __future__ import annotations

import os

from . import _cycle_py

python_cycle = _cycle_py.cycle

try:
    if os.environ.get("SPINFEEDBACK_PURE", "") not in ("", "0"):
        raise ImportError("pure backend requested")
    from ._cycle import cycle as compiled_cycle
except ImportError:
    compiled_cycle = None

BACKEND = "cython" if compiled_cycle is not None else "python"
cycle = compiled_cycle if compiled_cycle is not None else python_cycle


def get_cycle(backend: str | None = None):
    """Kernel for ``backend`` in {None, 'python', 'cython'}."""
    if backend in (None, "auto"):
        return cycle
    if backend == "python":
        return python_cycle
    if backend == "cython":
        if compiled_cycle is None:
            raise RuntimeError("compiled kernel is not built")
        return compiled_cycle
    raise ValueError(f"unknown backend {backend!r}")
