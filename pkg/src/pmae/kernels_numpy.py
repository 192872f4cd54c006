"""Pure-numpy kernel implementations (fallback backend).

Same contracts as ``kernels_numba``; shapes are (N, c) for the rowwise
kernels and (B, H, T, hd) for attention. Everything is float64.
"""

from __future__ import annotations

import numpy as np

LN_EPS = 1e-5

_GELU_K0 = 0.7978845608028654  # sqrt(2/pi)
_GELU_K1 = 0.044715


def layernorm_fwd(x, g, b):
    mu = x.mean(axis=1)
    var = x.var(axis=1)
    rstd = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu[:, None]) * rstd[:, None]
    return xhat * g + b, mu, rstd


def layernorm_bwd(dy, x, g, mu, rstd):
    xhat = (x - mu[:, None]) * rstd[:, None]
    dg = (dy * xhat).sum(axis=0)
    db = dy.sum(axis=0)
    dym = dy * g
    dx = rstd[:, None] * (
        dym
        - dym.mean(axis=1, keepdims=True)
        - xhat * (dym * xhat).mean(axis=1, keepdims=True)
    )
    return dx, dg, db


def gelu_fwd(x):
    t = np.tanh(_GELU_K0 * (x + _GELU_K1 * x**3))
    return 0.5 * x * (1.0 + t)


def gelu_bwd(dy, x):
    u = _GELU_K0 * (x + _GELU_K1 * x**3)
    t = np.tanh(u)
    du = _GELU_K0 * (1.0 + 3.0 * _GELU_K1 * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


def attention_fwd(q, k, v, key_visible):
    """Scaled dot-product attention; keys with key_visible = 0 are excluded.

    q, k, v: (B, H, T, hd); key_visible: (B, T) over {0, 1} or None.
    Returns (out, attn).
    """
    hd = q.shape[-1]
    scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(hd))
    if key_visible is not None:
        scores = np.where(key_visible[:, None, None, :] > 0.0, scores, -1e30)
    scores = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    attn = e / e.sum(axis=-1, keepdims=True)
    return attn @ v, attn


def attention_bwd(dout, q, k, v, attn):
    hd = q.shape[-1]
    scale = 1.0 / np.sqrt(hd)
    dv = attn.transpose(0, 1, 3, 2) @ dout
    dattn = dout @ v.transpose(0, 1, 3, 2)
    dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
    dq = (dscores @ k) * scale
    dk = (dscores.transpose(0, 1, 3, 2) @ q) * scale
    return dq, dk, dv


def partial_distance_matrix(x, m):
    """Pairwise Euclidean distances over co-observed columns.

    Distances rescale by sqrt(d / #co-observed); pairs with no co-observed
    column get +inf.
    """
    n, d = x.shape
    xm = x * m
    co = m @ m.T
    sq = (xm * xm) @ m.T
    dist2 = sq - 2.0 * (xm @ xm.T) + sq.T
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = dist2 * (d / co)
    scaled[co == 0] = np.inf
    # clamp tiny negative round-off before the square root
    return np.sqrt(np.maximum(scaled, 0.0))
