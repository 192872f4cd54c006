"""Model configuration and parameter initialization.

Parameters live in a flat name -> float64 ndarray dict with a stable
naming scheme (``enc0.attn.wq``, ``dec2.mlp.b1``, ...), which keeps the
optimizer, serialization, and finite-difference checks simple.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TRANSFORMER = "transformer"
MIXER = "mixer"

BLOCK_FORM_PAPER = "paper"     # x <- x + LN(x + mix(LN(x)))
BLOCK_FORM_PRENORM = "prenorm"  # x <- x + mix(LN(x))


@dataclass(frozen=True)
class ModelConfig:
    width: int = 32
    encoder_depth: int = 6
    decoder_depth: int = 4
    heads: int = 4
    block: str = MIXER
    dropout: float = 0.1
    expansion: int = 4
    block_form: str = BLOCK_FORM_PAPER

    def __post_init__(self):
        if self.block not in (TRANSFORMER, MIXER):
            raise ValueError(f"unknown block kind {self.block!r}")
        if self.block_form not in (BLOCK_FORM_PAPER, BLOCK_FORM_PRENORM):
            raise ValueError(f"unknown block form {self.block_form!r}")
        if self.width % self.heads != 0:
            raise ValueError("width must be divisible by heads")
        if self.encoder_depth < 1 or self.decoder_depth < 1:
            raise ValueError("depths must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")


def _trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    """Normal(0, std) resampled until within 2 std."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2.0 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2.0 * std
    return out


def _fan_in_uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def block_param_names(cfg: ModelConfig, prefix: str, tokens: int) -> list[str]:
    names = [f"{prefix}.ln1.g", f"{prefix}.ln1.b"]
    if cfg.block == TRANSFORMER:
        for p in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"):
            names.append(f"{prefix}.attn.{p}")
    else:
        names += [f"{prefix}.mix.w1", f"{prefix}.mix.b1",
                  f"{prefix}.mix.w2", f"{prefix}.mix.b2"]
    if cfg.block_form == BLOCK_FORM_PAPER:
        names += [f"{prefix}.ln2.g", f"{prefix}.ln2.b"]
    names += [f"{prefix}.ln3.g", f"{prefix}.ln3.b",
              f"{prefix}.mlp.w1", f"{prefix}.mlp.b1",
              f"{prefix}.mlp.w2", f"{prefix}.mlp.b2"]
    if cfg.block_form == BLOCK_FORM_PAPER:
        names += [f"{prefix}.ln4.g", f"{prefix}.ln4.b"]
    return names


def init_params(d: int, cfg: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    c = cfg.width
    t = d + 1
    th = cfg.expansion * t
    ch = cfg.expansion * c
    p: dict[str, np.ndarray] = {}
    p["emb_w"] = _trunc_normal(rng, (d, c))
    p["emb_b"] = np.zeros((d, c))
    p["pos"] = _trunc_normal(rng, (t, c))
    p["cls"] = _trunc_normal(rng, (c,))
    p["mask_tok"] = _trunc_normal(rng, (c,))

    def add_block(prefix: str):
        p[f"{prefix}.ln1.g"] = np.ones(c)
        p[f"{prefix}.ln1.b"] = np.zeros(c)
        if cfg.block == TRANSFORMER:
            for name in ("wq", "wk", "wv", "wo"):
                p[f"{prefix}.attn.{name}"] = _fan_in_uniform(rng, c, (c, c))
            for name in ("bq", "bk", "bv", "bo"):
                p[f"{prefix}.attn.{name}"] = np.zeros(c)
        else:
            p[f"{prefix}.mix.w1"] = _fan_in_uniform(rng, t, (t, th))
            p[f"{prefix}.mix.b1"] = np.zeros(th)
            p[f"{prefix}.mix.w2"] = _fan_in_uniform(rng, th, (th, t))
            p[f"{prefix}.mix.b2"] = np.zeros(t)
        if cfg.block_form == BLOCK_FORM_PAPER:
            p[f"{prefix}.ln2.g"] = np.ones(c)
            p[f"{prefix}.ln2.b"] = np.zeros(c)
        p[f"{prefix}.ln3.g"] = np.ones(c)
        p[f"{prefix}.ln3.b"] = np.zeros(c)
        p[f"{prefix}.mlp.w1"] = _fan_in_uniform(rng, c, (c, ch))
        p[f"{prefix}.mlp.b1"] = np.zeros(ch)
        p[f"{prefix}.mlp.w2"] = _fan_in_uniform(rng, ch, (ch, c))
        p[f"{prefix}.mlp.b2"] = np.zeros(c)

    for layer in range(cfg.encoder_depth):
        add_block(f"enc{layer}")
    for layer in range(cfg.decoder_depth):
        add_block(f"dec{layer}")
    p["head.w"] = _fan_in_uniform(rng, c, (d, c))
    p["head.b"] = np.zeros(d)
    return p


def param_count(d: int, cfg: ModelConfig) -> int:
    """Closed-form parameter count; must match init_params exactly."""
    c = cfg.width
    t = d + 1
    th = cfg.expansion * t
    ch = cfg.expansion * c
    tokenizer = 2 * d * c + t * c + 2 * c
    if cfg.block == TRANSFORMER:
        mixing = 4 * c * c + 4 * c
    else:
        mixing = 2 * t * th + th + t
    channel = c * ch + ch + ch * c + c
    n_ln = 4 if cfg.block_form == BLOCK_FORM_PAPER else 2
    per_block = mixing + channel + n_ln * 2 * c
    head = d * c + d
    return tokenizer + (cfg.encoder_depth + cfg.decoder_depth) * per_block + head


def zeros_like_params(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}
