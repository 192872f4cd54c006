"""Dataset schema, CSV loading, and the preprocessing pipeline.

Preprocessing runs in a fixed order on a complete dataset:

1. ``regroup_minor_categories`` -- rare category levels collapse into a
   shared ``OTHER`` label,
2. ``encode_categoricals`` -- levels map to ``{0, 1/(K-1), ..., 1}`` in
   sorted raw-label order,
3. ``quantile_transform`` -- numerical columns map through their empirical
   CDF (midpoint-rank ties) onto uniform [0, 1] marginals.

Datasets are immutable after construction; every operation returns a new
instance, so they are safe to share across parallel benchmark runs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

NUMERICAL = "numerical"
CATEGORICAL = "categorical"

#: Raw label assigned to regrouped minor categories.
OTHER_LABEL = "__OTHER__"

#: Sentinel marking missing entries in value matrices. Never written to
#: output files; masks are always explicit.
MISSING = np.nan


class DataError(ValueError):
    """Schema violation or malformed input file."""


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str
    cardinality: int | None = None

    def __post_init__(self):
        if self.kind not in (NUMERICAL, CATEGORICAL):
            raise DataError(f"unknown column kind {self.kind!r} for {self.name!r}")
        if self.kind == CATEGORICAL and self.cardinality is not None and self.cardinality < 1:
            raise DataError(f"cardinality must be >= 1, got {self.cardinality}")

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL


@dataclass(frozen=True)
class QuantileState:
    """Fitted empirical-CDF map for one numerical column.

    ``ref_values``/``ref_cdf`` are the sorted unique reference values and
    their midpoint-rank CDF positions; transforms of new values interpolate
    linearly and clip to [0, 1]. ``degenerate`` records a constant column,
    which maps everything to 0.5.
    """

    ref_values: np.ndarray
    ref_cdf: np.ndarray
    degenerate: bool = False

    def transform(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if self.degenerate:
            return np.full_like(v, 0.5)
        out = np.interp(v, self.ref_values, self.ref_cdf)
        return np.clip(out, 0.0, 1.0)

    def inverse(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64)
        if self.degenerate:
            return np.full_like(q, self.ref_values[0])
        return np.interp(q, self.ref_cdf, self.ref_values)


@dataclass(frozen=True)
class TabularDataset:
    """n x d column-typed dataset.

    ``columns`` holds one array per schema column: float64 for numerical
    columns, object (raw string labels) for categorical columns that have
    not been encoded yet. ``level_maps`` and ``transform_state`` fill in as
    the pipeline stages run.
    """

    schema: tuple[ColumnSchema, ...]
    columns: tuple[np.ndarray, ...]
    level_maps: dict[int, dict[str, int]] = field(default_factory=dict)
    transform_state: dict[int, QuantileState] = field(default_factory=dict)

    def __post_init__(self):
        names = [c.name for c in self.schema]
        if len(set(names)) != len(names):
            raise DataError("column names must be unique")
        if self.d < 2:
            raise DataError(f"need at least 2 columns, got {self.d}")
        if self.n < 1:
            raise DataError("dataset is empty")

    @property
    def n(self) -> int:
        return len(self.columns[0])

    @property
    def d(self) -> int:
        return len(self.schema)

    @property
    def is_encoded(self) -> bool:
        return all(c.dtype == np.float64 for c in self.columns)

    @property
    def values(self) -> np.ndarray:
        """Stacked n x d float matrix; requires categoricals to be encoded."""
        if not self.is_encoded:
            raise DataError("categorical columns are not encoded yet")
        return np.column_stack(self.columns)

    def column_index(self, name: str) -> int:
        for j, c in enumerate(self.schema):
            if c.name == name:
                return j
        raise DataError(f"no column named {name!r}")

    def encoded_levels(self, j: int) -> np.ndarray:
        """Valid encoded values {0, 1/(K-1), ..., 1} of categorical column j."""
        k = self.schema[j].cardinality
        if k is None:
            raise DataError(f"column {j} is not categorical")
        if k == 1:
            return np.zeros(1)
        return np.arange(k, dtype=np.float64) / (k - 1)

    def decode_label(self, j: int, encoded: float) -> str:
        """Raw (possibly regrouped) label for an encoded categorical value."""
        k = self.schema[j].cardinality
        level = 0 if k == 1 else int(round(encoded * (k - 1)))
        for label, lv in self.level_maps[j].items():
            if lv == level:
                return label
        raise DataError(f"encoded value {encoded} has no level in column {j}")


@dataclass(frozen=True)
class IncompleteDataset:
    """Preprocessed dataset plus its realized observed mask.

    ``observed_mask`` is an n x d float matrix over {0, 1}; an entry of the
    value matrix is meaningful iff the mask is 1 there.
    """

    base: TabularDataset
    observed_mask: np.ndarray

    def __post_init__(self):
        if self.observed_mask.shape != (self.base.n, self.base.d):
            raise DataError("mask shape does not match dataset")

    @property
    def values_with_nan(self) -> np.ndarray:
        """Value matrix with the missing sentinel at unobserved entries."""
        x = self.base.values.copy()
        x[self.observed_mask == 0] = MISSING
        return x

    @property
    def values_zero_filled(self) -> np.ndarray:
        return self.base.values * self.observed_mask


def load_schema(path: str | Path) -> list[ColumnSchema]:
    """Parse a schema file of ``name,kind`` lines (kind: numerical|categorical)."""
    out = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2:
            raise DataError(f"{path}:{lineno}: expected 'name,kind', got {raw!r}")
        out.append(ColumnSchema(name=parts[0], kind=parts[1]))
    if not out:
        raise DataError(f"schema file {path} is empty")
    return out


def load_dataset(csv_source: str | Path, schema_source) -> TabularDataset:
    """Load a header-ed CSV against a schema (path or list of ColumnSchema).

    Categorical columns are kept as raw labels pending encoding; numerical
    columns parse to float64.
    """
    schema = (
        load_schema(schema_source)
        if isinstance(schema_source, (str, Path))
        else list(schema_source)
    )
    with open(csv_source, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{csv_source} is empty")
    header, body = rows[0], rows[1:]
    if not body:
        raise DataError(f"{csv_source} has a header but no data rows")
    positions = {name: i for i, name in enumerate(header)}
    for col in schema:
        if col.name not in positions:
            raise DataError(f"schema column {col.name!r} not in CSV header")

    columns = []
    for col in schema:
        raw = [row[positions[col.name]] for row in body]
        if col.kind == NUMERICAL:
            try:
                arr = np.array([float(v) for v in raw], dtype=np.float64)
            except ValueError as exc:
                raise DataError(f"non-numeric token in column {col.name!r}: {exc}") from exc
        else:
            arr = np.array(raw, dtype=object)
        columns.append(arr)
    return TabularDataset(schema=tuple(schema), columns=tuple(columns))


def regroup_threshold(n: int) -> int:
    """Minimum category frequency kept as its own level."""
    return round(n / 100) if n / 100 > 30 else 30


def regroup_minor_categories(ds: TabularDataset) -> TabularDataset:
    """Relabel categories rarer than the frequency threshold to OTHER."""
    t = regroup_threshold(ds.n)
    columns = list(ds.columns)
    for j, col in enumerate(ds.schema):
        if not col.is_categorical:
            continue
        if columns[j].dtype == np.float64:
            raise DataError(f"column {col.name!r} is already encoded")
        labels, counts = np.unique(columns[j].astype(str), return_counts=True)
        minor = {lab for lab, cnt in zip(labels, counts) if cnt < t}
        if minor:
            new = np.array(
                [OTHER_LABEL if v in minor else v for v in columns[j].astype(str)],
                dtype=object,
            )
            columns[j] = new
    return replace(ds, columns=tuple(columns))


def encode_categoricals(ds: TabularDataset) -> TabularDataset:
    """Map categorical labels to levels in sorted raw-label order, scaled to [0, 1]."""
    columns = list(ds.columns)
    schema = list(ds.schema)
    level_maps = dict(ds.level_maps)
    for j, col in enumerate(schema):
        if not col.is_categorical:
            continue
        raw = columns[j].astype(str)
        labels = sorted(set(raw))
        k = len(labels)
        level_map = {lab: i for i, lab in enumerate(labels)}
        levels = np.array([level_map[v] for v in raw], dtype=np.float64)
        columns[j] = levels / (k - 1) if k > 1 else np.zeros(ds.n)
        level_maps[j] = level_map
        schema[j] = replace(col, cardinality=k)
    return replace(
        ds, columns=tuple(columns), schema=tuple(schema), level_maps=level_maps
    )


def _midpoint_rank_cdf(v: np.ndarray) -> np.ndarray:
    """Empirical CDF positions (avg_rank - 0.5) / n with tied values sharing
    the midpoint of their rank range."""
    n = len(v)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(n, dtype=np.float64)
    sorted_v = v[order]
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        # ranks i+1 .. j+1 share the midpoint
        mid = (i + j) / 2.0 + 1.0
        ranks[order[i : j + 1]] = mid
        i = j + 1
    return (ranks - 0.5) / n


def quantile_transform(ds: TabularDataset) -> TabularDataset:
    """Map each numerical column to uniform [0, 1] marginals via its empirical CDF."""
    columns = list(ds.columns)
    state = dict(ds.transform_state)
    for j, col in enumerate(ds.schema):
        if col.is_categorical:
            continue
        v = columns[j]
        cdf = _midpoint_rank_cdf(v)
        ref_values, first_idx = np.unique(v, return_index=True)
        degenerate = len(ref_values) == 1
        if degenerate:
            cdf = np.full(ds.n, 0.5)
        # tied values share one CDF position, so any occurrence represents it
        state[j] = QuantileState(
            ref_values=ref_values, ref_cdf=cdf[first_idx], degenerate=degenerate
        )
        columns[j] = cdf
    return replace(ds, columns=tuple(columns), transform_state=state)


def preprocess(ds: TabularDataset) -> TabularDataset:
    """Full pipeline: regroup -> encode -> quantile transform."""
    return quantile_transform(encode_categoricals(regroup_minor_categories(ds)))


def dump_transformed_csv(ds: TabularDataset, path: str | Path) -> None:
    """Write the transformed value matrix with 9-significant-digit formatting."""
    x = ds.values
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([c.name for c in ds.schema])
        for row in x:
            writer.writerow([f"{v:.9g}" for v in row])
