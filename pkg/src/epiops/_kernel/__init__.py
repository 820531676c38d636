"""Integration kernel dispatch: compiled extension if built, else the
pure-Python twin. ``EPIOPS_FORCE_PY_KERNEL=1`` forces the fallback (used by
the backend-agreement tests and the benchmark)."""

import os

from . import _rk4_py

if os.environ.get("EPIOPS_FORCE_PY_KERNEL") == "1":
    _impl = _rk4_py
    BACKEND = "python"
else:
    try:
        from . import _rk4 as _impl  # type: ignore[attr-defined]
        BACKEND = "cython"
    except ImportError:
        _impl = _rk4_py
        BACKEND = "python"

NSTATE = 13
rk4_trajectory = _impl.rk4_trajectory

__all__ = ["rk4_trajectory", "BACKEND", "NSTATE"]
