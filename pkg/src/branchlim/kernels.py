"""Backend selection for the hot loops.

The compiled extension is used when it imports; setting
``BRANCHLIM_PURE_PYTHON=1`` forces the Python fallback.
"""

import os

from . import _walk_py

try:
    if os.environ.get("BRANCHLIM_PURE_PYTHON"):
        raise ImportError("pure Python requested")
    from . import _walk as _walk_c
except ImportError:
    _walk_c = None

BACKEND = "cython" if _walk_c is not None else "python"


def available_backends() -> list[str]:
    return ["cython", "python"] if _walk_c is not None else ["python"]


def walk_chunk_for(backend: str | None = None):
    backend = backend or BACKEND
    if backend == "cython":
        if _walk_c is None:
            raise ImportError("compiled kernel not built")
        return _walk_c.walk_chunk
    if backend == "python":
        return _walk_py.walk_chunk
    raise ValueError(f"unknown backend {backend!r}")
