"""Training losses over observed entries.

The main loss normalizes each column's squared errors by the column's
observed count in the batch; by the mask-pair decomposition it splits into
an additionally-masked prediction part and a still-visible reconstruction
part with those same weights. The swapped-weighting variant normalizes
each part by its own count instead.
"""

from __future__ import annotations

import numpy as np

PMAE_LOSS = "pmae"
REMASKER_LOSS = "remasker"


def _check_pair(m, m_plus, m_minus):
    if not np.array_equal(m_plus + m_minus, m):
        raise ValueError("mask pair does not partition the observed mask")
    if np.any(m_plus * m_minus != 0.0):
        raise ValueError("mask pair overlaps")


def pmae_loss(predictions, x_batch, m, m_plus, m_minus) -> float:
    """Column-normalized squared error over observed entries."""
    _check_pair(m, m_plus, m_minus)
    loss, _ = pmae_loss_grad(predictions, x_batch, m)
    return loss


def pmae_loss_grad(predictions, x_batch, m):
    """Loss and d(loss)/d(predictions) without the pair validation."""
    diff = (predictions - x_batch) * m
    denom = m.sum(axis=0)
    ok = denom > 0
    col_sums = (diff * diff).sum(axis=0)
    loss = float((col_sums[ok] / denom[ok]).sum())
    dpred = np.zeros_like(predictions)
    dpred[:, ok] = 2.0 * diff[:, ok] / denom[ok]
    return loss, dpred


def remasker_loss(predictions, x_batch, m_plus, m_minus) -> float:
    """Swapped weighting: each part normalized by its own per-column count."""
    loss, _ = remasker_loss_grad(predictions, x_batch, m_plus, m_minus)
    return loss


def remasker_loss_grad(predictions, x_batch, m_plus, m_minus):
    diff = predictions - x_batch
    sq = diff * diff
    loss = 0.0
    dpred = np.zeros_like(predictions)
    for part in (m_plus, m_minus):
        denom = part.sum(axis=0)
        ok = denom > 0
        loss += float(((sq * part).sum(axis=0)[ok] / denom[ok]).sum())
        dpred[:, ok] += 2.0 * (diff * part)[:, ok] / denom[ok]
    return loss, dpred


def loss_and_grad(kind: str, predictions, x_batch, m, m_plus, m_minus):
    if kind == PMAE_LOSS:
        return pmae_loss_grad(predictions, x_batch, m)
    if kind == REMASKER_LOSS:
        return remasker_loss_grad(predictions, x_batch, m_plus, m_minus)
    raise ValueError(f"unknown loss kind {kind!r}")
