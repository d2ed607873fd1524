"""Kernel selection: compiled extension when importable, else pure Python."""

import os

from . import _pycore

kernels = _pycore
COMPILED = False

if not os.environ.get("HKPD_PURE_PYTHON"):
    try:
        from . import _core
    except ImportError:  # extension not built
        pass
    else:
        kernels = _core
        COMPILED = True

BACKEND = "compiled" if COMPILED else "python"
