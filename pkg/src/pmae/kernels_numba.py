"""Numba-compiled kernel implementations (default backend).

Loop forms of the kernels in ``kernels_numpy``, fused to avoid the
temporaries that dominate the small-matrix workloads here. Kernels stay
sequential (no prange) so results are deterministic run to run.
"""

from __future__ import annotations

import numpy as np
from numba import njit

LN_EPS = 1e-5

_GELU_K0 = 0.7978845608028654  # sqrt(2/pi)
_GELU_K1 = 0.044715


@njit(cache=True)
def layernorm_fwd(x, g, b):
    n, c = x.shape
    y = np.empty_like(x)
    mu = np.empty(n)
    rstd = np.empty(n)
    for i in range(n):
        s = 0.0
        for j in range(c):
            s += x[i, j]
        m = s / c
        var = 0.0
        for j in range(c):
            d = x[i, j] - m
            var += d * d
        r = 1.0 / np.sqrt(var / c + LN_EPS)
        mu[i] = m
        rstd[i] = r
        for j in range(c):
            y[i, j] = (x[i, j] - m) * r * g[j] + b[j]
    return y, mu, rstd


@njit(cache=True)
def layernorm_bwd(dy, x, g, mu, rstd):
    n, c = x.shape
    dx = np.empty_like(x)
    dg = np.zeros(c)
    db = np.zeros(c)
    for i in range(n):
        m = mu[i]
        r = rstd[i]
        s1 = 0.0
        s2 = 0.0
        for j in range(c):
            xh = (x[i, j] - m) * r
            dym = dy[i, j] * g[j]
            s1 += dym
            s2 += dym * xh
            dg[j] += dy[i, j] * xh
            db[j] += dy[i, j]
        s1 /= c
        s2 /= c
        for j in range(c):
            xh = (x[i, j] - m) * r
            dx[i, j] = r * (dy[i, j] * g[j] - s1 - xh * s2)
    return dx, dg, db


@njit(cache=True)
def gelu_fwd(x):
    out = np.empty_like(x)
    flat = x.reshape(-1)
    oflat = out.reshape(-1)
    for i in range(flat.shape[0]):
        v = flat[i]
        t = np.tanh(_GELU_K0 * (v + _GELU_K1 * v * v * v))
        oflat[i] = 0.5 * v * (1.0 + t)
    return out


@njit(cache=True)
def gelu_bwd(dy, x):
    out = np.empty_like(x)
    xf = x.reshape(-1)
    df = dy.reshape(-1)
    of = out.reshape(-1)
    for i in range(xf.shape[0]):
        v = xf[i]
        t = np.tanh(_GELU_K0 * (v + _GELU_K1 * v * v * v))
        du = _GELU_K0 * (1.0 + 3.0 * _GELU_K1 * v * v)
        of[i] = df[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du)
    return out


@njit(cache=True)
def _attention_fwd_masked(q, k, v, key_visible):
    bsz, h, t, hd = q.shape
    scale = 1.0 / np.sqrt(hd)
    out = np.empty_like(q)
    attn = np.empty((bsz, h, t, t))
    for b in range(bsz):
        for hh in range(h):
            for ti in range(t):
                mx = -1e300
                for tj in range(t):
                    s = 0.0
                    for e in range(hd):
                        s += q[b, hh, ti, e] * k[b, hh, tj, e]
                    s *= scale
                    if key_visible[b, tj] <= 0.0:
                        s = -1e30
                    attn[b, hh, ti, tj] = s
                    if s > mx:
                        mx = s
                tot = 0.0
                for tj in range(t):
                    e_ = np.exp(attn[b, hh, ti, tj] - mx)
                    attn[b, hh, ti, tj] = e_
                    tot += e_
                for tj in range(t):
                    attn[b, hh, ti, tj] /= tot
                for e in range(hd):
                    acc = 0.0
                    for tj in range(t):
                        acc += attn[b, hh, ti, tj] * v[b, hh, tj, e]
                    out[b, hh, ti, e] = acc
    return out, attn


def attention_fwd(q, k, v, key_visible):
    if key_visible is None:
        key_visible = np.ones((q.shape[0], q.shape[2]))
    return _attention_fwd_masked(q, k, v, key_visible)


@njit(cache=True)
def attention_bwd(dout, q, k, v, attn):
    bsz, h, t, hd = q.shape
    scale = 1.0 / np.sqrt(hd)
    dq = np.zeros_like(q)
    dk = np.zeros_like(k)
    dv = np.zeros_like(v)
    for b in range(bsz):
        for hh in range(h):
            for ti in range(t):
                # dattn and the softmax jacobian row
                row_dot = 0.0
                da_row = np.empty(t)
                for tj in range(t):
                    da = 0.0
                    for e in range(hd):
                        da += dout[b, hh, ti, e] * v[b, hh, tj, e]
                    da_row[tj] = da
                    row_dot += da * attn[b, hh, ti, tj]
                for tj in range(t):
                    ds = attn[b, hh, ti, tj] * (da_row[tj] - row_dot)
                    for e in range(hd):
                        dq[b, hh, ti, e] += ds * k[b, hh, tj, e] * scale
                        dk[b, hh, tj, e] += ds * q[b, hh, ti, e] * scale
                        dv[b, hh, tj, e] += attn[b, hh, ti, tj] * dout[b, hh, ti, e]
    return dq, dk, dv


@njit(cache=True)
def partial_distance_matrix(x, m):
    n, d = x.shape
    out = np.empty((n, n))
    for i in range(n):
        out[i, i] = 0.0
        for j in range(i + 1, n):
            co = 0
            acc = 0.0
            for c in range(d):
                if m[i, c] > 0.0 and m[j, c] > 0.0:
                    diff = x[i, c] - x[j, c]
                    acc += diff * diff
                    co += 1
            if co == 0:
                dist = np.inf
            else:
                dist = np.sqrt(acc * d / co)
            out[i, j] = dist
            out[j, i] = dist
    return out
