"""Kernel backend selection, resolved once at import.

The compiled extension is preferred. Set ``HIERMDA_BACKEND=python`` to force
the numpy fallback (``compiled`` makes a missing extension an ImportError).
"""

import os

from . import _pykernels

_choice = os.environ.get("HIERMDA_BACKEND", "auto").lower()
if _choice not in ("auto", "compiled", "python"):
    raise ImportError(f"HIERMDA_BACKEND must be auto, compiled or python, got {_choice!r}")

kernels = _pykernels
name = "python"
if _choice != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:
        if _choice == "compiled":
            raise
    else:
        kernels = _compiled
        name = "compiled"

RELU = _pykernels.RELU
TANH = _pykernels.TANH
PROB_FLOOR = _pykernels.PROB_FLOOR


def available():
    """Names of every backend importable in this environment."""
    out = ["python"]
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        pass
    else:
        out.insert(0, "compiled")
    return out


def get(backend_name):
    if backend_name == "python":
        return _pykernels
    if backend_name == "compiled":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {backend_name!r}")
