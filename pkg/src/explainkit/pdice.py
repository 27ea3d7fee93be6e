"""Partial dependence, ICE curves and their divergence diagnostic."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .data import Dataset, lower_quantile_index
from .errors import DataError

DEFAULT_GRID_POINTS = 20
HISTOGRAM_BINS = 10

# rows scored per call, bounds memory when sweeping large datasets
_BATCH_ROWS = 1 << 18


@dataclass
class PdIceResult:
    feature: int
    grid: np.ndarray
    pd: np.ndarray
    ice: np.ndarray
    instance_ids: np.ndarray
    divergence: np.ndarray
    histogram: tuple
    feature_name: str = ""
    constant_grid: bool = False

    def __post_init__(self):
        if len(self.pd) != len(self.grid):
            raise DataError("pd and grid lengths differ")
        if self.ice.shape != (len(self.instance_ids), len(self.grid)):
            raise DataError("ice shape does not match instances x grid")
        if np.any(np.diff(self.grid) <= 0):
            raise DataError("grid must be strictly increasing")

    def to_dict(self) -> dict:
        edges, counts = self.histogram
        return {
            "feature": self.feature_name or self.feature,
            "grid": self.grid.tolist(),
            "pd": self.pd.tolist(),
            "instance_ids": [int(i) for i in self.instance_ids],
            "ice": self.ice.tolist(),
            "divergence": self.divergence.tolist(),
            "histogram": {"edges": edges.tolist(), "counts": [int(c) for c in counts]},
            "constant_grid": self.constant_grid,
        }

    def to_csv(self) -> str:
        """Long format rows: feature, grid_value, series_id, value."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", "grid_value", "series_id", "value"])
        name = self.feature_name or str(self.feature)
        for g, v in zip(self.grid, self.pd):
            w.writerow([name, repr(float(g)), "pd", repr(float(v))])
        for rid, curve in zip(self.instance_ids, self.ice):
            for g, v in zip(self.grid, curve):
                w.writerow([name, repr(float(g)), f"ice_{int(rid)}", repr(float(v))])
        return buf.getvalue()


def make_grid(col, max_points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    """Sorted distinct values, or ``max_points`` lower-interpolated quantiles when there are more."""
    if max_points < 2:
        raise DataError("max_points must be >= 2")
    col = np.asarray(col, dtype=float)
    if col.size == 0:
        raise DataError("cannot build a grid from an empty column")
    distinct = np.unique(col)
    if distinct.size <= max_points:
        return distinct
    s = np.sort(col)
    idx = [lower_quantile_index(q, s.size) for q in np.linspace(0.0, 1.0, max_points)]
    return np.unique(s[idx])


def _overwritten_scores(score, X, columns, values) -> np.ndarray:
    """score of every row of X with ``columns`` set to ``values``."""
    Z = np.array(X, dtype=float, order="C")
    for c, v in zip(columns, values):
        Z[:, c] = v
    return np.asarray(score(Z), dtype=float)


def _sweep(score, X, feature, grid) -> np.ndarray:
    """(rows, grid) matrix of scores, batching several grid points per call."""
    n = X.shape[0]
    out = np.empty((n, len(grid)))
    per_call = max(1, _BATCH_ROWS // max(n, 1))
    for k in range(0, len(grid), per_call):
        chunk = grid[k:k + per_call]
        Z = np.repeat(np.asarray(X, dtype=float)[None], len(chunk), axis=0)
        Z[:, :, feature] = np.asarray(chunk)[:, None]
        out[:, k:k + len(chunk)] = np.asarray(score(Z.reshape(-1, X.shape[1])), dtype=float).reshape(len(chunk), n).T
    return out


def partial_dependence(score: Callable, data: Dataset, feature, grid) -> np.ndarray:
    j = data.index_of(feature)
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise DataError("grid is empty")
    return _sweep(score, data.features, j, grid).mean(axis=0)


def ice(score: Callable, data: Dataset, feature, grid, instance_ids) -> np.ndarray:
    j = data.index_of(feature)
    ids = np.asarray(instance_ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= data.n_rows):
        raise DataError("instance id out of range")
    return _sweep(score, data.features[ids], j, np.asarray(grid, dtype=float))


def decile_instances(score: Callable, data: Dataset) -> np.ndarray:
    """Rows at the minimum, each decile and the maximum of the score.

    Position k (k = 0..10) picks the row at index floor(k (n - 1) / 10) of
    the rows sorted by score; repeats are dropped keeping the first.
    """
    if data.n_rows == 0:
        raise DataError("no rows")
    s = np.asarray(score(data.features), dtype=float)
    order = np.argsort(s, kind="stable")
    n = order.size
    picked = [int(order[(k * (n - 1)) // 10]) for k in range(11)]
    return np.array(list(dict.fromkeys(picked)), dtype=np.int64)


def pd2(score: Callable, data: Dataset, feature_a, feature_b, grid_a, grid_b) -> np.ndarray:
    a, b = data.index_of(feature_a), data.index_of(feature_b)
    if a == b:
        raise DataError("two-way partial dependence needs distinct features")
    out = np.empty((len(grid_a), len(grid_b)))
    for p, va in enumerate(grid_a):
        for q, vb in enumerate(grid_b):
            out[p, q] = _overwritten_scores(score, data.features, (a, b), (va, vb)).mean()
    return out


def pd_ice_divergence(result_or_ice) -> np.ndarray:
    """Per grid point, the std of ICE curves after centring each curve on its own mean."""
    ice_m = result_or_ice.ice if isinstance(result_or_ice, PdIceResult) else np.asarray(result_or_ice, dtype=float)
    if ice_m.size == 0:
        raise DataError("no ICE curves")
    centred = ice_m - ice_m.mean(axis=1, keepdims=True)
    return centred.std(axis=0)


def histogram(col, bins: int = HISTOGRAM_BINS) -> tuple:
    col = np.asarray(col, dtype=float)
    lo, hi = float(col.min()), float(col.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(col, bins=bins, range=(lo, hi))
    return edges, counts


def pd_ice(score: Callable, data: Dataset, feature, grid: Optional[Sequence[float]] = None,
           instance_ids=None, max_points: int = DEFAULT_GRID_POINTS) -> PdIceResult:
    """Partial dependence with ICE curves (decile rows by default) and diagnostics."""
    j = data.index_of(feature)
    col = data.features[:, j]
    grid = make_grid(col, max_points) if grid is None else np.asarray(grid, dtype=float)
    ids = decile_instances(score, data) if instance_ids is None else np.asarray(instance_ids, dtype=np.int64)
    curves = ice(score, data, j, grid, ids)
    return PdIceResult(
        feature=j,
        grid=grid,
        pd=partial_dependence(score, data, j, grid),
        ice=curves,
        instance_ids=ids,
        divergence=pd_ice_divergence(curves) if len(ids) else np.zeros(len(grid)),
        histogram=histogram(col),
        feature_name=data.feature_names[j],
        constant_grid=grid.size == 1,
    )


def monotone_violations(ice_matrix, direction: int = 1, tol: float = 0.0) -> int:
    """Count adjacent grid steps where an ICE curve moves against ``direction``."""
    steps = np.diff(np.asarray(ice_matrix, dtype=float), axis=1) * direction
    return int((steps < -tol).sum())
