"""Raw tabular data <-> standardized continuous model space.

Categorical columns are target-encoded: each level is replaced by the mean
of the binary target over rows carrying that level. Fitting is out-of-fold
(a row's own fold is excluded from the mean) to limit target leakage; new
rows are encoded with full-data means. Decoding snaps a continuous value
back to the level with the nearest encoded mean via binary search on a
sorted level table. A one-hot encoder is provided for the encoding
comparison study.

All encoders standardize every output column to mean 0 / variance 1 using
parameters fitted on the training matrix; that standardized space is shared
by the flow, the classifier, and the evaluation metrics.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import ConfigError, DataError

CATEGORICAL = "categorical"
CONTINUOUS = "continuous"

Table = dict[str, np.ndarray]


@dataclass(frozen=True)
class Schema:
    """Column layout of a dataset: feature names in order, per-column kind,
    the binary target, and optional per-column generation constraints."""

    target: str
    positive_label: str
    features: tuple[str, ...]
    kinds: dict[str, str]
    weights: dict[str, float] = field(default_factory=dict)
    immutable: tuple[str, ...] = ()
    monotonic: tuple[str, ...] = ()

    def __post_init__(self):
        if self.target in self.features:
            raise ConfigError(f"target '{self.target}' listed among features")
        for name in self.features:
            if self.kinds.get(name) not in (CATEGORICAL, CONTINUOUS):
                raise ConfigError(f"feature '{name}' has no valid kind")
        for name, w in self.weights.items():
            if name not in self.features:
                raise ConfigError(f"weight for unknown feature '{name}'")
            if not w > 0:
                raise ConfigError(f"weight for '{name}' must be > 0, got {w}")
        for group, names in (("immutable", self.immutable), ("monotonic", self.monotonic)):
            for name in names:
                if name not in self.features:
                    raise ConfigError(f"{group} lists unknown feature '{name}'")

    @property
    def categorical(self) -> tuple[str, ...]:
        return tuple(f for f in self.features if self.kinds[f] == CATEGORICAL)

    @property
    def continuous(self) -> tuple[str, ...]:
        return tuple(f for f in self.features if self.kinds[f] == CONTINUOUS)

    def weight_of(self, name: str) -> float:
        return self.weights.get(name, 1.0)

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "positive_label": self.positive_label,
            "categorical": list(self.categorical),
            "continuous": list(self.continuous),
            "feature_order": list(self.features),
            "weights": dict(self.weights),
            "immutable": list(self.immutable),
            "monotonic": list(self.monotonic),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Schema":
        cat = list(d.get("categorical", []))
        con = list(d.get("continuous", []))
        order = list(d.get("feature_order", cat + con))
        if sorted(order) != sorted(cat + con):
            raise ConfigError("feature_order must list exactly the categorical + continuous columns")
        kinds = {name: CATEGORICAL for name in cat}
        kinds.update({name: CONTINUOUS for name in con})
        return cls(
            target=d["target"],
            positive_label=str(d["positive_label"]),
            features=tuple(order),
            kinds=kinds,
            weights={k: float(v) for k, v in d.get("weights", {}).items()},
            immutable=tuple(d.get("immutable", [])),
            monotonic=tuple(d.get("monotonic", [])),
        )


def load_schema(path) -> Schema:
    with open(path, encoding="utf-8") as fh:
        return Schema.from_dict(json.load(fh))


def save_schema(path, schema: Schema) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schema.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- CSV ingestion -------------------------------------------------------------

def load_table(path, schema: Schema) -> tuple[Table, np.ndarray]:
    """Read a UTF-8 CSV with header into feature columns and a {0,1} target."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file")
        missing = [c for c in (*schema.features, schema.target) if c not in reader.fieldnames]
        if missing:
            raise DataError(f"{path}: missing columns {missing}")
        records = list(reader)
    if not records:
        raise DataError(f"{path}: no data rows")
    return rows_to_table(records, schema, target=True)


def rows_to_table(rows: list[Mapping], schema: Schema, target: bool = False):
    """Convert dict-rows into typed column arrays (and the target if asked)."""
    if not rows:
        raise DataError("no rows given")
    table: Table = {}
    for name in schema.features:
        cells = []
        for i, row in enumerate(rows):
            if name not in row:
                raise DataError(f"row {i}: missing feature '{name}'")
            cells.append(row[name])
        if schema.kinds[name] == CONTINUOUS:
            try:
                table[name] = np.array([float(c) for c in cells], dtype=np.float64)
            except (TypeError, ValueError):
                raise DataError(f"column '{name}': non-numeric value in continuous column")
        else:
            table[name] = np.array([str(c) for c in cells], dtype=object)
    if not target:
        return table
    y = np.array([1.0 if str(r[schema.target]) == schema.positive_label else 0.0 for r in rows])
    return table, y


def subset_table(table: Table, idx) -> Table:
    return {k: v[idx] for k, v in table.items()}


def table_rows(table: Table, schema: Schema) -> list[dict]:
    n = len(next(iter(table.values())))
    out = []
    for i in range(n):
        row = {}
        for name in schema.features:
            v = table[name][i]
            row[name] = float(v) if schema.kinds[name] == CONTINUOUS else str(v)
        out.append(row)
    return out


# -- standardization -------------------------------------------------------------

def fit_standardizer(X: np.ndarray, names: Iterable[str]) -> tuple[np.ndarray, np.ndarray]:
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    for j, name in enumerate(names):
        if sd[j] < 1e-12:
            raise DataError(f"column '{name}' is degenerate (zero variance)")
    return mu, sd


# -- target encoding ---------------------------------------------------------------

def fold_assignments(n: int, k_folds: int, seed: int) -> np.ndarray:
    """Fold id per row: seeded random permutation cut into contiguous blocks."""
    if k_folds < 2:
        raise ConfigError(f"k_folds must be >= 2, got {k_folds}")
    if n < k_folds:
        raise DataError(f"cannot split {n} rows into {k_folds} folds")
    perm = np.random.default_rng(seed).permutation(n)
    fold_of = np.empty(n, dtype=np.intp)
    for f, rows in enumerate(np.array_split(perm, k_folds)):
        fold_of[rows] = f
    return fold_of


@dataclass
class LevelTable:
    """Per-column target-encoding state: level means plus a sorted table for
    nearest-level decoding. Duplicate means keep the lexicographically
    smallest level so decoding stays a function."""

    means: dict[str, float]
    global_mean: float
    sorted_values: np.ndarray
    sorted_levels: np.ndarray

    @classmethod
    def build(cls, means: dict[str, float], global_mean: float) -> "LevelTable":
        pairs = sorted(means.items(), key=lambda kv: (kv[1], kv[0]))
        values, levels = [], []
        for level, value in pairs:
            if values and value == values[-1]:
                continue
            values.append(value)
            levels.append(level)
        return cls(means, global_mean,
                   np.array(values, dtype=np.float64),
                   np.array(levels, dtype=object))

    def encode(self, cells: np.ndarray) -> np.ndarray:
        return np.array([self.means.get(c, self.global_mean) for c in cells])

    def snap(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Nearest level for each value; ties go to the lower encoded value."""
        tv = self.sorted_values
        hi = np.clip(np.searchsorted(tv, values), 0, len(tv) - 1)
        lo = np.clip(hi - 1, 0, len(tv) - 1)
        pick = np.where(np.abs(values - tv[lo]) <= np.abs(values - tv[hi]), lo, hi)
        return self.sorted_levels[pick], tv[pick]


@dataclass
class DecodedBatch:
    """Inverse-encoded rows: level tokens for categorical cells alongside the
    numeric value each cell decoded to (the snapped level mean, or the
    de-standardized continuous value)."""

    schema: Schema
    levels: dict[str, np.ndarray]
    values: dict[str, np.ndarray]

    def __len__(self):
        return len(next(iter(self.values.values())))

    def rows(self) -> list[dict]:
        out = []
        for i in range(len(self)):
            row = {}
            for name in self.schema.features:
                if self.schema.kinds[name] == CATEGORICAL:
                    row[name] = str(self.levels[name][i])
                else:
                    row[name] = float(self.values[name][i])
            out.append(row)
        return out

    def numeric_matrix(self) -> np.ndarray:
        """Raw-scale numeric view (level means for categorical cells); used by
        the monotonicity metric."""
        return np.column_stack([self.values[name] for name in self.schema.features])


class TargetEncoder:
    """Target encoding with out-of-fold fitting and nearest-level decoding."""

    def __init__(self, schema: Schema, k_folds: int = 10, seed: int = 0):
        self.schema = schema
        self.k_folds = k_folds
        self.seed = seed
        self.columns: dict[str, LevelTable] = {}
        self.mean: np.ndarray | None = None
        self.std: np.ndarray | None = None

    @property
    def width(self) -> int:
        return len(self.schema.features)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return self.schema.features

    def feature_weights(self) -> np.ndarray:
        return np.array([self.schema.weight_of(f) for f in self.schema.features])

    def monotonic_indices(self) -> tuple[int, ...]:
        return tuple(self.schema.features.index(f) for f in self.schema.monotonic)

    def fit_transform(self, table: Table, y: np.ndarray) -> np.ndarray:
        """Fit on training rows and return their standardized encoding.

        Each training row's categorical cells use means computed on the
        other k-1 folds; the stored state keeps full-data means for
        encoding new rows. Standardization parameters come from the
        out-of-fold encoded training matrix.
        """
        n = len(y)
        if n == 0:
            raise DataError("cannot fit encoder on empty data")
        y = np.asarray(y, dtype=np.float64)
        fold_of = fold_assignments(n, self.k_folds, self.seed)

        X = np.empty((n, self.width))
        for j, name in enumerate(self.schema.features):
            col = table[name]
            if self.schema.kinds[name] == CONTINUOUS:
                X[:, j] = col.astype(np.float64)
                continue
            levels, codes = np.unique(col.astype(object), return_inverse=True)
            n_levels = len(levels)
            tot_sum = np.bincount(codes, weights=y, minlength=n_levels)
            tot_cnt = np.bincount(codes, minlength=n_levels)
            enc = np.empty(n)
            for f in range(self.k_folds):
                mask = fold_of == f
                f_sum = np.bincount(codes[mask], weights=y[mask], minlength=n_levels)
                f_cnt = np.bincount(codes[mask], minlength=n_levels)
                comp_cnt = tot_cnt - f_cnt
                comp_global = (y.sum() - y[mask].sum()) / (n - mask.sum())
                comp_mean = np.where(comp_cnt > 0,
                                     (tot_sum - f_sum) / np.maximum(comp_cnt, 1),
                                     comp_global)
                enc[mask] = comp_mean[codes[mask]]
            X[:, j] = enc
            means = {str(levels[i]): tot_sum[i] / tot_cnt[i] for i in range(n_levels)}
            self.columns[name] = LevelTable.build(means, float(y.mean()))

        self.mean, self.std = fit_standardizer(X, self.schema.features)
        return (X - self.mean) / self.std

    def _require_fitted(self):
        if self.mean is None:
            raise ConfigError("encoder is not fitted")

    def transform(self, table: Table) -> np.ndarray:
        """Encode new rows with full-data level means, then standardize.
        Unseen levels fall back to the global target mean."""
        self._require_fitted()
        n = len(next(iter(table.values())))
        X = np.empty((n, self.width))
        for j, name in enumerate(self.schema.features):
            if name not in table:
                raise DataError(f"unknown or missing column '{name}'")
            if self.schema.kinds[name] == CONTINUOUS:
                X[:, j] = table[name].astype(np.float64)
            else:
                X[:, j] = self.columns[name].encode(table[name])
        return (X - self.mean) / self.std

    def transform_rows(self, rows: list[Mapping]) -> np.ndarray:
        return self.transform(rows_to_table(rows, self.schema))

    def inverse(self, X: np.ndarray) -> DecodedBatch:
        """De-standardize and snap categorical coordinates to the nearest
        fitted level. Total on reals; continuous coordinates pass through."""
        self._require_fitted()
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        V = X * self.std + self.mean
        levels: dict[str, np.ndarray] = {}
        values: dict[str, np.ndarray] = {}
        for j, name in enumerate(self.schema.features):
            if self.schema.kinds[name] == CATEGORICAL:
                lv, val = self.columns[name].snap(V[:, j])
                levels[name] = lv
                values[name] = val
            else:
                values[name] = V[:, j]
        return DecodedBatch(self.schema, levels, values)

    def encode_decoded(self, decoded: DecodedBatch) -> np.ndarray:
        """Standardized coordinates of already-decoded rows (snapped grid)."""
        self._require_fitted()
        V = decoded.numeric_matrix()
        return (V - self.mean) / self.std


# -- one-hot encoding --------------------------------------------------------------

class OneHotEncoder:
    """One indicator column per categorical level, kept as raw 0/1 so every
    category flip has the same perturbation cost; continuous columns are
    standardized."""

    def __init__(self, schema: Schema):
        self.schema = schema
        self.levels: dict[str, tuple[str, ...]] = {}
        self.mean: np.ndarray | None = None
        self.std: np.ndarray | None = None
        self._names: tuple[str, ...] = ()

    @property
    def width(self) -> int:
        return len(self._names)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return self._names

    def feature_weights(self) -> np.ndarray:
        out = []
        for name in self.schema.features:
            w = self.schema.weight_of(name)
            out.extend([w] * (len(self.levels[name]) if self.schema.kinds[name] == CATEGORICAL else 1))
        return np.array(out)

    def monotonic_indices(self) -> tuple[int, ...]:
        idx = []
        for mono in self.schema.monotonic:
            if self.schema.kinds[mono] == CATEGORICAL:
                raise ConfigError(
                    f"monotonic constraint on categorical '{mono}' is not representable one-hot")
            idx.append(self._names.index(mono))
        return tuple(idx)

    def _indicator_matrix(self, table: Table) -> np.ndarray:
        n = len(next(iter(table.values())))
        blocks = []
        for name in self.schema.features:
            if name not in table:
                raise DataError(f"unknown or missing column '{name}'")
            if self.schema.kinds[name] == CONTINUOUS:
                blocks.append(table[name].astype(np.float64).reshape(-1, 1))
            else:
                pos = {lv: i for i, lv in enumerate(self.levels[name])}
                block = np.zeros((n, len(pos)))
                for r, cell in enumerate(table[name]):
                    i = pos.get(cell)
                    if i is not None:  # unseen level -> all-zero block
                        block[r, i] = 1.0
                blocks.append(block)
        return np.hstack(blocks)

    def fit_transform(self, table: Table) -> np.ndarray:
        names: list[str] = []
        cont_idx: list[int] = []
        for name in self.schema.features:
            if self.schema.kinds[name] == CATEGORICAL:
                self.levels[name] = tuple(sorted(set(table[name].astype(object))))
                names.extend(f"{name}={lv}" for lv in self.levels[name])
            else:
                cont_idx.append(len(names))
                names.append(name)
        self._names = tuple(names)
        X = self._indicator_matrix(table)
        mu, sd = fit_standardizer(X[:, cont_idx], [self._names[j] for j in cont_idx])
        self.mean = np.zeros(len(self._names))
        self.std = np.ones(len(self._names))
        self.mean[cont_idx] = mu
        self.std[cont_idx] = sd
        return (X - self.mean) / self.std

    def transform(self, table: Table) -> np.ndarray:
        if self.mean is None:
            raise ConfigError("encoder is not fitted")
        return (self._indicator_matrix(table) - self.mean) / self.std
