"""Semi-synthetic missingness: logistic propensity models and pattern recipes.

Given a complete, preprocessed dataset, each column selected for
missingness gets a logistic propensity model over the one-hot-expanded
feature space (numerical columns first, then each categorical level). The
coefficient vector is drawn N(0, 1), zeroed according to the mechanism,
and the intercept is calibrated by bisection so the mean observed rate
hits the column's target.

Patterns:

* ``monotone``     -- a sampled column set gets observed rate 0.5; the
                      complement stays fully observed,
* ``quasi_monotone`` -- the sampled set is nearly complete (rates in
                      U(0.95, 0.99)); its complement draws U(0.2, 0.8),
* ``general``      -- every column draws a rate from U(0.2, 0.8).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MCAR = "mcar"
MAR = "mar"
MNAR = "mnar"
MECHANISMS = (MCAR, MAR, MNAR)

MONOTONE = "monotone"
QUASI_MONOTONE = "quasi_monotone"
GENERAL = "general"
PATTERNS = (MONOTONE, QUASI_MONOTONE, GENERAL)

#: Propensity intercept search interval for the calibration bisection.
_BISECT_LO, _BISECT_HI = -50.0, 50.0
_BISECT_TOL = 1e-6

#: Attempts to re-draw a row that came out fully missing.
_REDRAW_LIMIT = 100


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class PatternConfig:
    pattern: str
    p_col: float

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown pattern {self.pattern!r}")
        if self.pattern == MONOTONE and self.p_col not in (0.3, 0.6):
            raise ValueError("monotone pattern uses p_col in {0.3, 0.6}")
        if self.pattern == QUASI_MONOTONE and self.p_col != 0.6:
            raise ValueError("quasi-monotone pattern fixes p_col = 0.6")
        if self.pattern == GENERAL and self.p_col != 1.0:
            raise ValueError("general pattern fixes p_col = 1")

    @classmethod
    def monotone(cls, p_col: float = 0.6) -> "PatternConfig":
        return cls(pattern=MONOTONE, p_col=p_col)

    @classmethod
    def quasi_monotone(cls) -> "PatternConfig":
        return cls(pattern=QUASI_MONOTONE, p_col=0.6)

    @classmethod
    def general(cls) -> "PatternConfig":
        return cls(pattern=GENERAL, p_col=1.0)


@dataclass(frozen=True)
class PropensityModel:
    """Per-column logistic missingness model over expanded features."""

    target_column: int
    beta: np.ndarray
    beta0: float
    mechanism: str
    target_rate: float

    def propensities(self, x_expanded: np.ndarray) -> np.ndarray:
        return _sigmoid(self.beta0 + x_expanded @ self.beta)


@dataclass(frozen=True)
class MissingnessResult:
    mask: np.ndarray
    models: tuple[PropensityModel, ...]
    missing_columns: np.ndarray
    structural_set: np.ndarray
    target_rates: dict[int, float] = field(default_factory=dict)


def expand_features(ds) -> tuple[np.ndarray, np.ndarray]:
    """One-hot-expand a preprocessed dataset.

    Returns the n x (d_n + sum K_j) matrix (numerical columns in original
    order first, then each categorical column's levels) and the owning
    original-column index of every expanded feature.
    """
    x = ds.values
    blocks, owners = [], []
    for j, col in enumerate(ds.schema):
        if col.is_categorical:
            continue
        blocks.append(x[:, j : j + 1])
        owners.append(j)
    for j, col in enumerate(ds.schema):
        if not col.is_categorical:
            continue
        k = col.cardinality
        levels = np.rint(x[:, j] * (k - 1)).astype(int) if k > 1 else np.zeros(ds.n, int)
        onehot = np.zeros((ds.n, k))
        onehot[np.arange(ds.n), levels] = 1.0
        blocks.append(onehot)
        owners.extend([j] * k)
    return np.hstack(blocks), np.array(owners, dtype=int)


def sample_missing_columns(
    d: int, p_col: float, rng: np.random.Generator, require_complement: bool = False
) -> np.ndarray:
    """Independently include each column with probability p_col.

    With ``require_complement`` (monotone/quasi patterns) the draw repeats
    until the set is neither empty nor every column.
    """
    if d < 2:
        raise ValueError(f"need at least 2 columns, got {d}")
    if not 0.0 < p_col <= 1.0:
        raise ValueError(f"p_col must be in (0, 1], got {p_col}")
    if p_col == 1.0:
        return np.arange(d)
    while True:
        picked = np.flatnonzero(rng.random(d) < p_col)
        if len(picked) == 0:
            continue
        if require_complement and len(picked) == d:
            continue
        return picked


def calibrate_intercept(scores: np.ndarray, target_rate: float) -> float:
    """Bisection for beta0 such that mean sigmoid(beta0 + scores) = target_rate."""
    lo, hi = _BISECT_LO, _BISECT_HI

    def mean_rate(b0: float) -> float:
        return float(_sigmoid(b0 + scores).mean())

    if mean_rate(lo) > target_rate or mean_rate(hi) < target_rate:
        raise RuntimeError("intercept calibration failed to bracket the target rate")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        r = mean_rate(mid)
        if abs(r - target_rate) <= _BISECT_TOL:
            return mid
        if r < target_rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def build_propensity(
    x_expanded: np.ndarray,
    feature_owners: np.ndarray,
    target_column: int,
    mechanism: str,
    pattern: str,
    structural_set: np.ndarray,
    target_rate: float,
    rng: np.random.Generator,
) -> PropensityModel:
    """Draw and calibrate one column's logistic propensity model."""
    if mechanism not in MECHANISMS:
        raise ValueError(f"unknown mechanism {mechanism!r}")
    if not 0.0 < target_rate < 1.0:
        raise ValueError(f"target rate must be in (0, 1), got {target_rate}")
    beta = rng.standard_normal(x_expanded.shape[1])
    in_set = np.isin(feature_owners, structural_set)
    if mechanism == MCAR:
        beta[:] = 0.0
    elif mechanism == MAR:
        beta[in_set] = 0.0
    elif mechanism == MNAR and pattern == MONOTONE:
        beta[~in_set] = 0.0
    beta0 = calibrate_intercept(x_expanded @ beta, target_rate)
    return PropensityModel(
        target_column=target_column,
        beta=beta,
        beta0=beta0,
        mechanism=mechanism,
        target_rate=target_rate,
    )


def _draw_column_rates(
    pattern_cfg: PatternConfig, d: int, structural: np.ndarray, rng: np.random.Generator
) -> dict[int, float]:
    rates: dict[int, float] = {}
    if pattern_cfg.pattern == MONOTONE:
        for j in structural:
            rates[int(j)] = 0.5
    elif pattern_cfg.pattern == QUASI_MONOTONE:
        in_structural = np.zeros(d, dtype=bool)
        in_structural[structural] = True
        for j in range(d):
            rates[j] = float(
                rng.uniform(0.95, 0.99) if in_structural[j] else rng.uniform(0.2, 0.8)
            )
    else:
        for j in range(d):
            rates[j] = float(rng.uniform(0.2, 0.8))
    return rates


def generate_missingness(
    ds, pattern_cfg: PatternConfig, mechanism: str, rng: np.random.Generator
) -> MissingnessResult:
    """Sample the observed mask for a complete preprocessed dataset."""
    x_expanded, owners = expand_features(ds)
    n, d = ds.n, ds.d
    structural = sample_missing_columns(
        d,
        pattern_cfg.p_col,
        rng,
        require_complement=pattern_cfg.pattern in (MONOTONE, QUASI_MONOTONE),
    )
    rates = _draw_column_rates(pattern_cfg, d, structural, rng)
    missing_columns = np.array(sorted(rates), dtype=int)

    models = []
    pi = {}
    mask = np.ones((n, d))
    for j in missing_columns:
        model = build_propensity(
            x_expanded, owners, int(j), mechanism, pattern_cfg.pattern,
            structural, rates[int(j)], rng,
        )
        models.append(model)
        pi[int(j)] = model.propensities(x_expanded)
        mask[:, j] = (rng.random(n) < pi[int(j)]).astype(np.float64)

    # a fully missing row is untrainable and unevaluable: re-draw, then force
    # the row's most probable entry if the draws keep coming up empty
    for i in np.flatnonzero(mask.sum(axis=1) == 0):
        for _ in range(_REDRAW_LIMIT):
            for j in missing_columns:
                mask[i, j] = float(rng.random() < pi[int(j)][i])
            if mask[i].sum() > 0:
                break
        else:
            best = max(missing_columns, key=lambda j: pi[int(j)][i])
            mask[i, int(best)] = 1.0
    return MissingnessResult(
        mask=mask,
        models=tuple(models),
        missing_columns=missing_columns,
        structural_set=structural,
        target_rates=rates,
    )


def generate_masks(
    ds, pattern_cfg: PatternConfig, mechanism: str, rng: np.random.Generator
) -> np.ndarray:
    """Observed-mask matrix only; see generate_missingness for the full result."""
    return generate_missingness(ds, pattern_cfg, mechanism, rng).mask


def export_mask_csv(mask: np.ndarray, column_names, path) -> None:
    """Write a 0/1 mask CSV aligned to the dataset columns."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(column_names))
        for row in mask:
            writer.writerow([int(v) for v in row])
