"""Masked autoencoder over column tokens: forward pass and exact gradients.

The network tokenizes each row (per-column affine value embedding +
positional embedding, CLS prepended), runs encoder blocks, and decodes to
one scalar per column. Blocks follow the composed residual form

    x <- x + LN(x + mix(LN(x)))
    x <- x + LN(x + MLP_c(LN(x)))

where ``mix`` is multi-head self-attention (transformer) or a cross-token
MLP applied per channel (mixer). A ``prenorm`` config switch drops the
outer LN and uses the plain pre-norm residual instead.

Masking semantics differ by block kind:

* transformer -- entries hidden by the additional mask are excluded from
  the encoder: they are invisible as attention keys, and their lanes are
  replaced by a learnable mask token (plus positional embedding) at the
  decoder input. Encoder outputs at visible lanes are exactly what a
  packed visible-only sequence would produce.
* mixer -- the token-mixing MLP needs a fixed token count, so masked lanes
  carry the mask token from tokenization onward and the decoder consumes
  the encoder output directly. Outputs are independent of the original
  values at masked positions.

Backward passes are hand-derived; they are validated against central
finite differences in the test suite.
"""

from __future__ import annotations

import numpy as np

from .. import kernels as K
from .params import (
    BLOCK_FORM_PAPER,
    MIXER,
    TRANSFORMER,
    ModelConfig,
    init_params,
    zeros_like_params,
)


def _ln_fwd(x3, g, b):
    bsz, t, c = x3.shape
    x2 = np.ascontiguousarray(x3.reshape(bsz * t, c))
    y2, mu, rstd = K.layernorm_fwd(x2, g, b)
    return y2.reshape(bsz, t, c), (x2, mu, rstd)


def _ln_bwd(dy3, g, cache):
    x2, mu, rstd = cache
    dy2 = np.ascontiguousarray(dy3.reshape(x2.shape))
    dx2, dg, db = K.layernorm_bwd(dy2, x2, g, mu, rstd)
    return dx2.reshape(dy3.shape), dg, db


def _dropout_fwd(x, rate, rng):
    if rng is None or rate <= 0.0:
        return x, None
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * keep, keep


class MaskedAutoencoder:
    """Encoder-decoder imputation network for one dataset width ``d``."""

    def __init__(self, d: int, cfg: ModelConfig):
        self.d = d
        self.cfg = cfg
        self.tokens = d + 1

    # ------------------------------------------------------------------ setup

    def init_params(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        return init_params(self.d, self.cfg, rng)

    # ------------------------------------------------------------- sub-blocks

    def _attention_sub_fwd(self, params, pfx, x3, key_vis):
        cfg = self.cfg
        bsz, t, c = x3.shape
        h, hd = cfg.heads, c // cfg.heads
        u, ln1c = _ln_fwd(x3, params[f"{pfx}.ln1.g"], params[f"{pfx}.ln1.b"])
        q3 = u @ params[f"{pfx}.attn.wq"] + params[f"{pfx}.attn.bq"]
        k3 = u @ params[f"{pfx}.attn.wk"] + params[f"{pfx}.attn.bk"]
        v3 = u @ params[f"{pfx}.attn.wv"] + params[f"{pfx}.attn.bv"]

        def to4(a):
            return np.ascontiguousarray(
                a.reshape(bsz, t, h, hd).transpose(0, 2, 1, 3)
            )

        q4, k4, v4 = to4(q3), to4(k3), to4(v3)
        out4, attn = K.attention_fwd(q4, k4, v4, key_vis)
        o3 = np.ascontiguousarray(out4.transpose(0, 2, 1, 3)).reshape(bsz, t, c)
        s3 = o3 @ params[f"{pfx}.attn.wo"] + params[f"{pfx}.attn.bo"]
        return s3, (ln1c, u, q4, k4, v4, attn, o3)

    def _attention_sub_bwd(self, params, pfx, cache, ds3, grads):
        cfg = self.cfg
        ln1c, u, q4, k4, v4, attn, o3 = cache
        bsz, t, c = ds3.shape
        h, hd = cfg.heads, c // cfg.heads
        grads[f"{pfx}.attn.wo"] += np.tensordot(o3, ds3, axes=([0, 1], [0, 1]))
        grads[f"{pfx}.attn.bo"] += ds3.sum(axis=(0, 1))
        do3 = ds3 @ params[f"{pfx}.attn.wo"].T
        dout4 = np.ascontiguousarray(
            do3.reshape(bsz, t, h, hd).transpose(0, 2, 1, 3)
        )
        dq4, dk4, dv4 = K.attention_bwd(dout4, q4, k4, v4, attn)

        def to3(a4):
            return np.ascontiguousarray(a4.transpose(0, 2, 1, 3)).reshape(bsz, t, c)

        dq3, dk3, dv3 = to3(dq4), to3(dk4), to3(dv4)
        du = (
            dq3 @ params[f"{pfx}.attn.wq"].T
            + dk3 @ params[f"{pfx}.attn.wk"].T
            + dv3 @ params[f"{pfx}.attn.wv"].T
        )
        for name, dproj in (("wq", dq3), ("wk", dk3), ("wv", dv3)):
            grads[f"{pfx}.attn.{name}"] += np.tensordot(u, dproj, axes=([0, 1], [0, 1]))
        for name, dproj in (("bq", dq3), ("bk", dk3), ("bv", dv3)):
            grads[f"{pfx}.attn.{name}"] += dproj.sum(axis=(0, 1))
        dx, dg, db = _ln_bwd(du, params[f"{pfx}.ln1.g"], ln1c)
        grads[f"{pfx}.ln1.g"] += dg
        grads[f"{pfx}.ln1.b"] += db
        return dx

    def _mix_sub_fwd(self, params, pfx, x3):
        u, ln1c = _ln_fwd(x3, params[f"{pfx}.ln1.g"], params[f"{pfx}.ln1.b"])
        ut = np.ascontiguousarray(u.transpose(0, 2, 1))
        h = ut @ params[f"{pfx}.mix.w1"] + params[f"{pfx}.mix.b1"]
        a = K.gelu_fwd(h)
        z = a @ params[f"{pfx}.mix.w2"] + params[f"{pfx}.mix.b2"]
        s3 = np.ascontiguousarray(z.transpose(0, 2, 1))
        return s3, (ln1c, ut, h, a)

    def _mix_sub_bwd(self, params, pfx, cache, ds3, grads):
        ln1c, ut, h, a = cache
        dz = np.ascontiguousarray(ds3.transpose(0, 2, 1))
        grads[f"{pfx}.mix.w2"] += np.tensordot(a, dz, axes=([0, 1], [0, 1]))
        grads[f"{pfx}.mix.b2"] += dz.sum(axis=(0, 1))
        da = dz @ params[f"{pfx}.mix.w2"].T
        dh = K.gelu_bwd(da, h)
        grads[f"{pfx}.mix.w1"] += np.tensordot(ut, dh, axes=([0, 1], [0, 1]))
        grads[f"{pfx}.mix.b1"] += dh.sum(axis=(0, 1))
        dut = dh @ params[f"{pfx}.mix.w1"].T
        du = np.ascontiguousarray(dut.transpose(0, 2, 1))
        dx, dg, db = _ln_bwd(du, params[f"{pfx}.ln1.g"], ln1c)
        grads[f"{pfx}.ln1.g"] += dg
        grads[f"{pfx}.ln1.b"] += db
        return dx

    def _mlp_sub_fwd(self, params, pfx, x3, drop_rng):
        cfg = self.cfg
        u, ln3c = _ln_fwd(x3, params[f"{pfx}.ln3.g"], params[f"{pfx}.ln3.b"])
        h = u @ params[f"{pfx}.mlp.w1"] + params[f"{pfx}.mlp.b1"]
        a = K.gelu_fwd(h)
        a_d, keep1 = _dropout_fwd(a, cfg.dropout, drop_rng)
        z = a_d @ params[f"{pfx}.mlp.w2"] + params[f"{pfx}.mlp.b2"]
        z_d, keep2 = _dropout_fwd(z, cfg.dropout, drop_rng)
        return z_d, (ln3c, u, h, a_d, keep1, keep2)

    def _mlp_sub_bwd(self, params, pfx, cache, ds3, grads):
        ln3c, u, h, a_d, keep1, keep2 = cache
        dz = ds3 if keep2 is None else ds3 * keep2
        grads[f"{pfx}.mlp.w2"] += np.tensordot(a_d, dz, axes=([0, 1], [0, 1]))
        grads[f"{pfx}.mlp.b2"] += dz.sum(axis=(0, 1))
        da_d = dz @ params[f"{pfx}.mlp.w2"].T
        da = da_d if keep1 is None else da_d * keep1
        dh = K.gelu_bwd(np.ascontiguousarray(da), h)
        grads[f"{pfx}.mlp.w1"] += np.tensordot(u, dh, axes=([0, 1], [0, 1]))
        grads[f"{pfx}.mlp.b1"] += dh.sum(axis=(0, 1))
        du = dh @ params[f"{pfx}.mlp.w1"].T
        dx, dg, db = _ln_bwd(du, params[f"{pfx}.ln3.g"], ln3c)
        grads[f"{pfx}.ln3.g"] += dg
        grads[f"{pfx}.ln3.b"] += db
        return dx

    # ------------------------------------------------------- residual wrapper

    def _residual_fwd(self, params, x3, sub_out, ln_pfx):
        """Compose one sub-block output into the stream."""
        if self.cfg.block_form == BLOCK_FORM_PAPER:
            v = x3 + sub_out
            w, lnc = _ln_fwd(v, params[f"{ln_pfx}.g"], params[f"{ln_pfx}.b"])
            return x3 + w, lnc
        return x3 + sub_out, None

    def _residual_bwd(self, params, dout, lnc, ln_pfx, grads):
        """Returns (dx_direct, d_sub): gradient going straight to the block
        input and gradient entering the sub-block output."""
        if self.cfg.block_form == BLOCK_FORM_PAPER:
            dv, dg, db = _ln_bwd(dout, params[f"{ln_pfx}.g"], lnc)
            grads[f"{ln_pfx}.g"] += dg
            grads[f"{ln_pfx}.b"] += db
            return dout + dv, dv
        return dout, dout

    # ------------------------------------------------------------- full block

    def _block_fwd(self, params, pfx, x3, key_vis, drop_rng, record):
        if self.cfg.block == TRANSFORMER:
            s, mix_cache = self._attention_sub_fwd(params, pfx, x3, key_vis)
        else:
            s, mix_cache = self._mix_sub_fwd(params, pfx, x3)
        x_mid, ln2c = self._residual_fwd(params, x3, s, f"{pfx}.ln2")
        if record is not None:
            record.append(
                (pfx, np.abs(x3).mean(axis=(0, 2)), np.abs(x_mid).mean(axis=(0, 2)))
            )
        z, mlp_cache = self._mlp_sub_fwd(params, pfx, x_mid, drop_rng)
        out, ln4c = self._residual_fwd(params, x_mid, z, f"{pfx}.ln4")
        return out, (mix_cache, ln2c, mlp_cache, ln4c)

    def _block_bwd(self, params, pfx, cache, dout, grads):
        mix_cache, ln2c, mlp_cache, ln4c = cache
        dx_mid, dz = self._residual_bwd(params, dout, ln4c, f"{pfx}.ln4", grads)
        dx_mid = dx_mid + self._mlp_sub_bwd(params, pfx, mlp_cache, dz, grads)
        dx, ds = self._residual_bwd(params, dx_mid, ln2c, f"{pfx}.ln2", grads)
        if self.cfg.block == TRANSFORMER:
            dx = dx + self._attention_sub_bwd(params, pfx, mix_cache, ds, grads)
        else:
            dx = dx + self._mix_sub_bwd(params, pfx, mix_cache, ds, grads)
        return dx

    # ---------------------------------------------------------------- forward

    def forward(
        self,
        params: dict[str, np.ndarray],
        x: np.ndarray,
        m_plus: np.ndarray,
        *,
        drop_rng: np.random.Generator | None = None,
        record: list | None = None,
    ):
        """Predict a full d-vector per row from the visible entries.

        ``x`` is the preprocessed value matrix (any entry with m_plus = 0 is
        ignored); ``m_plus`` marks what the encoder may see. Pass a
        ``drop_rng`` to enable dropout (training); leave it None for
        deterministic inference.
        """
        cfg = self.cfg
        d, t = self.d, self.tokens
        bsz = x.shape[0]
        if x.shape != (bsz, d) or m_plus.shape != (bsz, d):
            raise ValueError("batch shape mismatch")
        xv = x * m_plus
        val_tok = (
            xv[:, :, None] * params["emb_w"][None]
            + params["emb_b"][None]
            + params["pos"][None, 1:]
        )
        seq = np.empty((bsz, t, cfg.width))
        seq[:, 0] = params["cls"] + params["pos"][0]
        hidden = m_plus == 0.0
        if cfg.block == MIXER:
            mask_lane = params["mask_tok"][None, None, :] + params["pos"][None, 1:]
            seq[:, 1:] = np.where(hidden[:, :, None], mask_lane, val_tok)
            key_vis = None
        else:
            seq[:, 1:] = val_tok
            key_vis = np.concatenate([np.ones((bsz, 1)), m_plus], axis=1)

        enc_caches = []
        h = seq
        for layer in range(cfg.encoder_depth):
            h, c = self._block_fwd(params, f"enc{layer}", h, key_vis, drop_rng, record)
            enc_caches.append(c)

        if cfg.block == TRANSFORMER:
            reinsert = np.concatenate([np.zeros((bsz, 1), bool), hidden], axis=1)
            mask_lane_full = params["mask_tok"][None, None, :] + params["pos"][None, :]
            dec_in = np.where(reinsert[:, :, None], mask_lane_full, h)
        else:
            reinsert = None
            dec_in = h

        dec_caches = []
        g = dec_in
        for layer in range(cfg.decoder_depth):
            g, c = self._block_fwd(params, f"dec{layer}", g, None, drop_rng, record)
            dec_caches.append(c)

        preds = np.einsum("bjc,jc->bj", g[:, 1:], params["head.w"]) + params["head.b"]
        cache = (xv, hidden, reinsert, enc_caches, dec_caches, g)
        return preds, cache

    # --------------------------------------------------------------- backward

    def backward(self, params, cache, dpreds):
        cfg = self.cfg
        xv, hidden, reinsert, enc_caches, dec_caches, g = cache
        bsz = dpreds.shape[0]
        grads = zeros_like_params(params)

        grads["head.w"] += np.einsum("bj,bjc->jc", dpreds, g[:, 1:])
        grads["head.b"] += dpreds.sum(axis=0)
        dg3 = np.zeros((bsz, self.tokens, cfg.width))
        dg3[:, 1:] = dpreds[:, :, None] * params["head.w"][None]

        for layer in range(cfg.decoder_depth - 1, -1, -1):
            dg3 = self._block_bwd(params, f"dec{layer}", dec_caches[layer], dg3, grads)

        if cfg.block == TRANSFORMER:
            lane_grad = np.where(reinsert[:, :, None], dg3, 0.0)
            grads["mask_tok"] += lane_grad.sum(axis=(0, 1))
            grads["pos"] += lane_grad.sum(axis=0)
            dh = np.where(reinsert[:, :, None], 0.0, dg3)
        else:
            dh = dg3

        for layer in range(cfg.encoder_depth - 1, -1, -1):
            dh = self._block_bwd(params, f"enc{layer}", enc_caches[layer], dh, grads)

        grads["cls"] += dh[:, 0].sum(axis=0)
        grads["pos"][0] += dh[:, 0].sum(axis=0)
        dval = dh[:, 1:]
        if cfg.block == MIXER:
            lane_grad = np.where(hidden[:, :, None], dval, 0.0)
            grads["mask_tok"] += lane_grad.sum(axis=(0, 1))
            grads["pos"][1:] += lane_grad.sum(axis=0)
            dval = np.where(hidden[:, :, None], 0.0, dval)
            grads["pos"][1:] += dval.sum(axis=0)
        else:
            grads["pos"][1:] += dval.sum(axis=0)
        grads["emb_w"] += (dval * xv[:, :, None]).sum(axis=0)
        grads["emb_b"] += dval.sum(axis=0)
        return grads

    # ------------------------------------------------------------ diagnostics

    def token_mixing_magnitudes(self, params, x, m_plus):
        """Mean |representation| per token entering/leaving each token-mixing
        sub-block, averaged over batch and channels."""
        record: list = []
        self.forward(params, x, m_plus, record=record)
        rows = []
        for pfx, before, after in record:
            for tok in range(self.tokens):
                rows.append(
                    {
                        "block": pfx,
                        "token": "cls" if tok == 0 else f"col{tok - 1}",
                        "before": float(before[tok]),
                        "after": float(after[tok]),
                    }
                )
        return rows
