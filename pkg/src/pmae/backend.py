"""Numba/numpy backend selection for the hot kernels.

The package runs on two interchangeable kernel backends:

* ``numba`` -- loop kernels compiled with ``@njit`` (default when numba
  imports cleanly),
* ``numpy`` -- pure vectorized fallback, always available.

Selection is controlled by the ``PMAE_BACKEND`` environment variable
(``numba`` or ``numpy``), read once at import time. Matrix products always
go through BLAS on both backends; only fused elementwise/reduction kernels
and the KNN distance loops differ.
"""

from __future__ import annotations

import os

_VALID = ("numba", "numpy")


def _detect() -> str:
    requested = os.environ.get("PMAE_BACKEND", "").strip().lower()
    if requested and requested not in _VALID:
        raise ValueError(
            f"PMAE_BACKEND={requested!r} not recognized; expected one of {_VALID}"
        )
    if requested == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if requested == "numba":
            raise
        return "numpy"
    return "numba"


ACTIVE_BACKEND: str = _detect()


def use_numba() -> bool:
    return ACTIVE_BACKEND == "numba"
