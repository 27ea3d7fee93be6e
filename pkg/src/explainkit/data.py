"""Datasets, the interaction simulator, CSV ingestion and column statistics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, UndefinedCorrelationError

DEFAULT_SEED = 12345

SIGNAL_FEATURES = ("num1", "num4", "num8", "num9")
SIM_FEATURE_NAMES = tuple(f"num{i}" for i in range(1, 13))


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with names and optional binary labels.

    ``features`` is stored column-major (Fortran order) with shape
    ``(n_rows, n_cols)``; ``features[:, j]`` is the j-th column.
    """

    features: np.ndarray
    feature_names: tuple
    labels: Optional[np.ndarray] = None
    target_name: Optional[str] = None

    def __post_init__(self):
        X = np.asfortranarray(np.asarray(self.features, dtype=float))
        if X.ndim != 2:
            raise DataError(f"features must be 2-d, got shape {X.shape}")
        names = tuple(str(n) for n in self.feature_names)
        if len(names) != X.shape[1]:
            raise DataError(f"{len(names)} feature names for {X.shape[1]} columns")
        if len(set(names)) != len(names):
            raise DataError("feature names must be unique")
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "feature_names", names)
        if self.labels is not None:
            y = np.asarray(self.labels, dtype=float)
            if y.shape != (X.shape[0],):
                raise DataError(f"labels have shape {y.shape}, expected ({X.shape[0]},)")
            if not np.all((y == 0) | (y == 1)):
                raise DataError("labels must be 0 or 1")
            object.__setattr__(self, "labels", _frozen(y.astype(np.int64)))

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_cols(self) -> int:
        return self.features.shape[1]

    @property
    def X(self) -> np.ndarray:
        return self.features

    def column(self, name_or_index) -> np.ndarray:
        return self.features[:, self.index_of(name_or_index)]

    def index_of(self, name_or_index) -> int:
        if isinstance(name_or_index, (int, np.integer)):
            j = int(name_or_index)
            if not 0 <= j < self.n_cols:
                raise DataError(f"feature index {j} out of range")
            return j
        try:
            return self.feature_names.index(name_or_index)
        except ValueError:
            raise DataError(f"unknown feature {name_or_index!r}") from None

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        labels = None if self.labels is None else self.labels[rows]
        return Dataset(self.features[rows], self.feature_names, labels, self.target_name)


@dataclass(frozen=True)
class SimConfig:
    n_rows: int
    seed: int = DEFAULT_SEED
    noise_fraction: float = 0.15
    threshold: float = 0.42

    def __post_init__(self):
        if self.n_rows < 1:
            raise DataError("n_rows must be >= 1")
        if not 0.0 <= self.noise_fraction <= 1.0:
            raise DataError("noise_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class ColumnStats:
    mean: float
    std: float
    min: float
    max: float
    quantiles: tuple = field(default_factory=tuple)

    def quantile(self, level: float) -> float:
        for lv, v in self.quantiles:
            if lv == level:
                return v
        raise KeyError(level)


def signal_score(X: np.ndarray) -> np.ndarray:
    """num1*num4 + |num8|*num9**2 for a 12-column simulated matrix."""
    X = np.asarray(X, dtype=float)
    return X[:, 0] * X[:, 3] + np.abs(X[:, 7]) * X[:, 8] ** 2


def simulate_signal(config: SimConfig) -> Dataset:
    """Draw the 12-feature interaction dataset with label switching.

    Features are i.i.d. uniform on [-1, 1]; the clean label is
    ``num1*num4 + |num8|*num9**2 >= threshold``; exactly
    ``round(noise_fraction * n_rows)`` labels, chosen without replacement,
    are flipped.
    """
    rng = np.random.default_rng(config.seed)
    X = rng.uniform(-1.0, 1.0, size=(config.n_rows, len(SIM_FEATURE_NAMES)))
    y = (signal_score(X) >= config.threshold).astype(np.int64)
    n_flip = int(round(config.noise_fraction * config.n_rows))
    if n_flip:
        flip = rng.choice(config.n_rows, size=n_flip, replace=False)
        y[flip] = 1 - y[flip]
    return Dataset(X, SIM_FEATURE_NAMES, y, "label")


def load_csv(path, target: Optional[str] = None, id_column: Optional[str] = None) -> Dataset:
    """Read a headered numeric CSV.

    The target column (if given) becomes the labels and the id column is
    dropped; every other column is a feature, in file order.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if target is not None and target not in header:
            raise DataError(f"{path}: target column {target!r} not in header")
        if id_column is not None and id_column not in header:
            raise DataError(f"{path}: id column {id_column!r} not in header")
        keep = [i for i, h in enumerate(header) if h not in (target, id_column)]
        t_idx = header.index(target) if target is not None else None
        rows, labels = [], []
        for line_no, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}: row {line_no} has {len(rec)} fields, expected {len(header)}")
            vals = []
            for i in keep:
                vals.append(_parse_cell(rec[i], path, line_no, header[i]))
            rows.append(vals)
            if t_idx is not None:
                labels.append(_parse_cell(rec[t_idx], path, line_no, header[t_idx]))
    X = np.array(rows, dtype=float).reshape(len(rows), len(keep))
    y = np.array(labels, dtype=float) if t_idx is not None else None
    return Dataset(X, [header[i] for i in keep], y, target)


def _parse_cell(cell: str, path, line_no: int, column: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise DataError(f"{path}: row {line_no}, column {column!r}: cannot parse {cell!r} as a number") from None


def write_csv(data: Dataset, path, label_name: Optional[str] = None) -> None:
    label_name = label_name or data.target_name or "label"
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = list(data.feature_names)
        if data.labels is not None:
            header.append(label_name)
        w.writerow(header)
        for i in range(data.n_rows):
            rec = [repr(float(v)) for v in data.features[i]]
            if data.labels is not None:
                rec.append(str(int(data.labels[i])))
            w.writerow(rec)


def split(data: Dataset, validation_fraction: float, seed: int = DEFAULT_SEED):
    """Randomly partition rows into (train, validation).

    The validation rows are the first ``round(fraction * n)`` entries of a
    seeded permutation; both parts keep the original row order.
    """
    if not 0.0 < validation_fraction < 1.0:
        raise DataError("validation_fraction must lie strictly between 0 and 1")
    n_val = int(round(validation_fraction * data.n_rows))
    if n_val == 0 or n_val == data.n_rows:
        raise DataError(f"split of {data.n_rows} rows at {validation_fraction} leaves an empty partition")
    perm = np.random.default_rng(seed).permutation(data.n_rows)
    val_rows = np.sort(perm[:n_val])
    train_rows = np.sort(perm[n_val:])
    return data.take(train_rows), data.take(val_rows)


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise DataError("pearson needs two 1-d vectors of equal length >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("correlation is undefined for a constant vector")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def lower_quantile_index(level: float, n: int) -> int:
    # small slack keeps e.g. 0.3 * 10 from landing on 2.999...
    return min(n - 1, max(0, int(math.floor(level * (n - 1) + 1e-9))))


def column_stats(data: Dataset, quantile_levels: Sequence[float] = (0.25, 0.5, 0.75)) -> list:
    if data.n_rows < 1:
        raise DataError("column_stats needs at least one row")
    out = []
    for j in range(data.n_cols):
        col = np.sort(data.features[:, j])
        qs = tuple((float(lv), float(col[lower_quantile_index(lv, col.size)])) for lv in quantile_levels)
        out.append(ColumnStats(float(col.mean()), float(col.std()), float(col[0]), float(col[-1]), qs))
    return out
