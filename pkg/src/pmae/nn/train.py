"""Training loop: adaptive optimizer, batch-size schedule, epoch driver.

Weight decay is decoupled (applied directly to the parameters, not through
the gradient) and restricted to the token-mixing weights. The batch size
follows the fixed schedule over dataset size unless overridden.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..masking import MaskingFunctionSpec, observed_proportions, masking_rate, sample_additional_mask
from .losses import PMAE_LOSS, loss_and_grad
from .model import MaskedAutoencoder
from .params import ModelConfig

#: (exclusive upper n bound, batch size); the last row catches everything.
BATCH_SCHEDULE = (
    (1_000, 128),
    (2_500, 256),
    (5_000, 512),
    (10_000, 1_024),
    (20_000, 2_048),
    (None, 4_096),
)


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; message carries a parameter-norm snapshot."""


def batch_size_for(n: int) -> int:
    for bound, size in BATCH_SCHEDULE:
        if bound is None or n < bound:
            return size
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 600
    lr: float = 1e-3
    weight_decay: float = 1e-5
    batch_size: int | None = None  # None: use the size schedule
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    loss: str = PMAE_LOSS


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    loss_curve: list[tuple[int, float]] = field(default_factory=list)


def _is_token_mixing_weight(name: str) -> bool:
    return ".attn.w" in name or ".mix.w" in name


class AdamW:
    def __init__(self, params, cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0
        self.decayed = {k for k in params if _is_token_mixing_weight(k)}

    def step(self, params, grads, lr: float):
        cfg = self.cfg
        self.t += 1
        bc1 = 1.0 - cfg.beta1**self.t
        bc2 = 1.0 - cfg.beta2**self.t
        for k, p in params.items():
            g = grads[k]
            self.m[k] = cfg.beta1 * self.m[k] + (1.0 - cfg.beta1) * g
            self.v[k] = cfg.beta2 * self.v[k] + (1.0 - cfg.beta2) * (g * g)
            update = (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + cfg.eps)
            if k in self.decayed and cfg.weight_decay > 0.0:
                update = update + cfg.weight_decay * p
            p -= lr * update


def cosine_lr(base_lr: float, epoch: int, total_epochs: int) -> float:
    if total_epochs <= 1:
        return base_lr
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * epoch / (total_epochs - 1)))


def _param_norm_snapshot(params) -> str:
    worst = sorted(
        ((float(np.abs(v).max()), k) for k, v in params.items()), reverse=True
    )[:5]
    return ", ".join(f"{k}:|max|={m:.3g}" for m, k in worst)


def train(
    incomplete_ds,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    masking_spec: MaskingFunctionSpec,
    rng: np.random.Generator,
) -> TrainResult:
    """Fit the autoencoder on an incomplete preprocessed dataset.

    The generator splits into independent child streams for model init, row
    shuffling, additional-mask draws, and dropout, so each component is
    reproducible on its own.
    """
    init_rng, shuffle_rng, mask_rng, drop_rng = rng.spawn(4)
    x = incomplete_ds.values_zero_filled
    m = incomplete_ds.observed_mask.astype(np.float64)
    n, d = x.shape
    model = MaskedAutoencoder(d, model_cfg)
    params = model.init_params(init_rng)
    opt = AdamW(params, train_cfg)
    bsz = train_cfg.batch_size or batch_size_for(n)
    use_dropout = model_cfg.dropout > 0.0

    curve: list[tuple[int, float]] = []
    for epoch in range(train_cfg.epochs):
        lr = cosine_lr(train_cfg.lr, epoch, train_cfg.epochs)
        order = shuffle_rng.permutation(n)
        total, batches = 0.0, 0
        for start in range(0, n, bsz):
            idx = order[start : start + bsz]
            xb, mb = x[idx], m[idx]
            p_obs = observed_proportions(mb)
            rates = masking_rate(masking_spec, p_obs)
            m_plus, m_minus = sample_additional_mask(mb, rates, mask_rng)
            preds, cache = model.forward(
                params, xb, m_plus, drop_rng=drop_rng if use_dropout else None
            )
            loss, dpred = loss_and_grad(train_cfg.loss, preds, xb, mb, m_plus, m_minus)
            if not math.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}; {_param_norm_snapshot(params)}"
                )
            grads = model.backward(params, cache, dpred)
            opt.step(params, grads, lr)
            total += loss
            batches += 1
        curve.append((epoch, total / max(batches, 1)))
    return TrainResult(params=params, loss_curve=curve)


def impute(
    params: dict[str, np.ndarray],
    model_cfg: ModelConfig,
    incomplete_ds,
    chunk: int = 4_096,
) -> np.ndarray:
    """Predictions at missing positions only (zeros where observed).

    Categorical outputs snap to the nearest valid encoded level; numerical
    outputs clip to [0, 1].
    """
    x = incomplete_ds.values_zero_filled
    m = incomplete_ds.observed_mask.astype(np.float64)
    n, d = x.shape
    model = MaskedAutoencoder(d, model_cfg)
    preds = np.empty_like(x)
    for start in range(0, n, chunk):
        sl = slice(start, start + chunk)
        preds[sl], _ = model.forward(params, x[sl], m[sl])
    schema = incomplete_ds.base.schema
    for j, col in enumerate(schema):
        if col.is_categorical:
            k = col.cardinality
            if k > 1:
                levels = np.clip(np.rint(preds[:, j] * (k - 1)), 0, k - 1)
                preds[:, j] = levels / (k - 1)
            else:
                preds[:, j] = 0.0
        else:
            preds[:, j] = np.clip(preds[:, j], 0.0, 1.0)
    return preds * (1.0 - m)
