"""Kernel backend selection.

Hot inner loops have two interchangeable implementations: numba ``@njit``
kernels and pure-numpy fallbacks.  The active backend is chosen once at
import time from the ``RSJD_BACKEND`` environment variable (``"numba"`` or
``"numpy"``); the default is numba when it is importable.  Both backends
perform the same floating-point operations in the same per-path order, so
results are bitwise identical either way.
"""

from __future__ import annotations

import os

_ENV_VAR = "RSJD_BACKEND"

# Deterministic, dependency-free threading layer unless the user pinned one.
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

try:
    import numba  # noqa: F401

    _HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    _HAS_NUMBA = False


def _resolve() -> str:
    requested = os.environ.get(_ENV_VAR, "").strip().lower()
    if requested == "numpy":
        return "numpy"
    if requested == "numba":
        if not _HAS_NUMBA:
            raise ImportError(
                f"{_ENV_VAR}=numba requested but numba is not importable"
            )
        return "numba"
    if requested:
        raise ValueError(
            f"{_ENV_VAR} must be 'numba' or 'numpy', got {requested!r}"
        )
    return "numba" if _HAS_NUMBA else "numpy"


BACKEND: str = _resolve()


def using_numba() -> bool:
    return BACKEND == "numba"


def set_num_threads(n: int) -> None:
    """Set the numba threading layer width (no-op on the numpy backend).

    Results never depend on the thread count: kernels write per-path output
    slots and reductions run in a fixed order.
    """
    if n < 1:
        raise ValueError("thread count must be >= 1")
    if using_numba():
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
