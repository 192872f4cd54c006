"""Kernel dispatch: numba when available (and not disabled), numpy otherwise.

Import the backend modules directly in tests/benchmarks to compare the two
implementations regardless of the active selection.
"""

from __future__ import annotations

from .backend import ACTIVE_BACKEND, use_numba

if use_numba():
    from . import kernels_numba as _impl
else:
    from . import kernels_numpy as _impl

LN_EPS = _impl.LN_EPS
layernorm_fwd = _impl.layernorm_fwd
layernorm_bwd = _impl.layernorm_bwd
gelu_fwd = _impl.gelu_fwd
gelu_bwd = _impl.gelu_bwd
attention_fwd = _impl.attention_fwd
attention_bwd = _impl.attention_bwd
partial_distance_matrix = _impl.partial_distance_matrix

__all__ = [
    "ACTIVE_BACKEND",
    "LN_EPS",
    "layernorm_fwd",
    "layernorm_bwd",
    "gelu_fwd",
    "gelu_bwd",
    "attention_fwd",
    "attention_bwd",
    "partial_distance_matrix",
]
