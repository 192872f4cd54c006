"""Observed-proportion statistics and the additional-mask sampling step.

During training, each observed entry of a batch may be additionally hidden
with a column-wise probability given by a masking function of the column's
observed proportion. ``m_minus`` marks additionally hidden entries,
``m_plus`` what stays visible; together they partition the observed mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

LOGIT = "logit"
CONSTANT = "constant"
NO_RECON = "norecon"
NO_PRED = "nopred"
LINEAR = "linear"
REVERSED = "reversed"
PIECEWISE = "piecewise"
SIGMOID_LIKE = "sigmoidlike"

KINDS = (LOGIT, CONSTANT, NO_RECON, NO_PRED, LINEAR, REVERSED, PIECEWISE, SIGMOID_LIKE)


@dataclass(frozen=True)
class MaskingFunctionSpec:
    """Masking-rate family selector. ``a``/``b`` only apply to the logit kind."""

    kind: str = LOGIT
    a: float = 0.05
    b: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown masking kind {self.kind!r}; expected one of {KINDS}")


class MaskPair(NamedTuple):
    m_plus: np.ndarray
    m_minus: np.ndarray


def observed_proportions(mask_batch: np.ndarray) -> np.ndarray:
    """Column-wise mean of the observed mask over a batch."""
    mask_batch = np.asarray(mask_batch, dtype=np.float64)
    if mask_batch.ndim != 2 or mask_batch.shape[0] == 0:
        raise ValueError("mask batch must be a nonempty 2-D array")
    return mask_batch.mean(axis=0)


def _logit_rate(p: np.ndarray, a: float, b: float) -> np.ndarray:
    out = np.empty_like(p)
    interior = (p > 0.0) & (p < 1.0)
    with np.errstate(divide="ignore"):
        out[interior] = a * np.log((1.0 - p[interior]) / p[interior]) + b
    # p = 0 is the +inf-logit limit: sign of `a` decides the clipped value
    if a > 0:
        limit0 = 1.0
    elif a < 0:
        limit0 = 0.0
    else:
        limit0 = b
    out[p <= 0.0] = limit0
    out[p >= 1.0] = b  # placeholder; fully-observed exemption zeroes it below
    return out


def masking_rate(spec: MaskingFunctionSpec, p_obs: np.ndarray | float) -> np.ndarray | float:
    """Additional-masking probability per column, clipped to [0, 1].

    Columns that are fully observed (p_obs = 1) are exempt across every
    variant: masking them would train prediction of never-missing values.
    """
    scalar = np.isscalar(p_obs)
    p = np.atleast_1d(np.asarray(p_obs, dtype=np.float64))
    if spec.kind == LOGIT:
        rate = _logit_rate(p, spec.a, spec.b)
    elif spec.kind == CONSTANT:
        rate = np.where(p < 1.0, 0.5, 0.0)
    elif spec.kind == NO_RECON:
        rate = np.ones_like(p)
    elif spec.kind == NO_PRED:
        rate = np.zeros_like(p)
    elif spec.kind == LINEAR:
        rate = 1.0 - p
    elif spec.kind == REVERSED:
        rate = p.copy()
    elif spec.kind == PIECEWISE:
        rate = np.where(p < 0.5, 1.0 - p, 0.5)
    elif spec.kind == SIGMOID_LIKE:
        rate = 1.0 / (np.exp(-10.0 * (0.5 - p)) + 1.0)
    else:  # pragma: no cover - guarded by the spec dataclass
        raise ValueError(spec.kind)
    rate = np.clip(rate, 0.0, 1.0)
    rate[p >= 1.0] = 0.0
    return float(rate[0]) if scalar else rate


def sample_additional_mask(
    observed_mask_batch: np.ndarray, rates: np.ndarray, rng: np.random.Generator
) -> MaskPair:
    """Draw the additional mask: each observed entry hides with its column rate.

    Unobserved entries get m_plus = m_minus = 0, so the pair always
    partitions the observed mask exactly.
    """
    m = np.asarray(observed_mask_batch, dtype=np.float64)
    rates = np.asarray(rates, dtype=np.float64)
    if m.ndim != 2 or rates.shape != (m.shape[1],):
        raise ValueError(
            f"shape mismatch: mask {m.shape} vs rates {rates.shape}"
        )
    u = rng.uniform(size=m.shape)
    m_minus = ((u < rates[None, :]) & (m == 1.0)).astype(np.float64)
    m_plus = m - m_minus
    return MaskPair(m_plus=m_plus, m_minus=m_minus)


def logit_rate_scalar(p: float, a: float = 0.05, b: float = 0.5) -> float:
    """Convenience scalar evaluation of the logit masking rate."""
    if p >= 1.0:
        return 0.0
    if p <= 0.0:
        return 1.0 if a > 0 else (0.0 if a < 0 else min(max(b, 0.0), 1.0))
    return min(max(a * math.log((1.0 - p) / p) + b, 0.0), 1.0)
