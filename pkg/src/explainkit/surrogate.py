"""Global decision-tree surrogates of a scoring function."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .data import DEFAULT_SEED, Dataset
from .errors import DataError, ModelError
from .model.tree import LEAF, DecisionTree, fit_tree

MAPE_FLOOR = 1e-6


@dataclass(frozen=True)
class Fidelity:
    r2: float
    rmse: float
    mape: float
    mape_excluded: int = 0
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {"r2": self.r2, "rmse": self.rmse, "mape": self.mape,
                "mape_excluded": self.mape_excluded, "degenerate": self.degenerate}


@dataclass
class SurrogateReport:
    tree: DecisionTree
    fidelity: Fidelity
    importance: np.ndarray
    interactions: list
    feature_names: tuple = ()
    cv: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        names = self.feature_names or tuple(f"x{j}" for j in range(len(self.importance)))
        return {
            "fidelity": self.fidelity.to_dict(),
            "cv": {k: {"mean": m, "std": s} for k, (m, s) in sorted(self.cv.items())},
            "importance": {n: float(v) for n, v in zip(names, self.importance)},
            "interactions": [{"parent": names[a], "child": names[b], "depth": d} for a, b, d in self.interactions],
            "tree": self.tree.to_dict(),
        }


def fidelity(targets, predictions) -> Fidelity:
    """R^2, RMSE and MAPE of surrogate predictions against the scores they imitate.

    Rows with |target| below 1e-6 are left out of MAPE and counted. A
    zero-variance target gives R^2 = 1 with ``degenerate`` set.
    """
    y = np.asarray(targets, dtype=float)
    p = np.asarray(predictions, dtype=float)
    if y.size == 0 or y.shape != p.shape:
        raise DataError("fidelity needs matching non-empty vectors")
    err = y - p
    sse = float(err @ err)
    d = y - y.mean()
    sst = float(d @ d)
    degenerate = bool(np.ptp(y) == 0.0)
    r2 = 1.0 if degenerate else 1.0 - sse / sst
    keep = np.abs(y) >= MAPE_FLOOR
    mape = float(np.mean(np.abs(err[keep] / y[keep]))) if keep.any() else float("nan")
    return Fidelity(r2, float(np.sqrt(sse / y.size)), mape, int((~keep).sum()), degenerate)


def gain_importance(tree: DecisionTree, n_features: int) -> np.ndarray:
    imp = np.zeros(n_features)
    internal = tree.feature != LEAF
    np.add.at(imp, tree.feature[internal], tree.gain[internal])
    return imp


def interactions(tree: DecisionTree) -> list:
    """(parent feature, child feature, parent depth) for every parent-child split pair on different features."""
    depth = tree.node_depths()
    seen, out = set(), []
    for i in range(tree.n_nodes):
        f = int(tree.feature[i])
        if f == LEAF:
            continue
        for c in (tree.left[i], tree.right[i]):
            g = int(tree.feature[c])
            if g == LEAF or g == f:
                continue
            key = (f, g, int(depth[i]))
            if key not in seen:
                seen.add(key)
                out.append(key)
    return out


def extract_surrogate(score: Callable, data: Dataset, depth: int = 3) -> SurrogateReport:
    """Fit a regression tree of the given depth to ``score(data)`` and measure its fidelity."""
    if depth < 1:
        raise ModelError("depth must be >= 1")
    if data.n_rows == 0:
        raise DataError("surrogate extraction needs rows")
    target = np.asarray(score(data.features), dtype=float)
    tree = fit_tree(data.features, target, max_depth=depth)
    fid = fidelity(target, tree.predict(data.features))
    return SurrogateReport(tree, fid, gain_importance(tree, data.n_cols), interactions(tree), data.feature_names)


def cv_stability(score: Callable, data: Dataset, depth: int = 3, folds: int = 3,
                 seed: int = DEFAULT_SEED) -> dict:
    """Mean and population std of each fidelity metric over held-out folds."""
    if folds < 2:
        raise ModelError("folds must be >= 2")
    if data.n_rows < 2 * folds:
        raise DataError(f"{data.n_rows} rows are too few for {folds} folds")
    target = np.asarray(score(data.features), dtype=float)
    assign = np.random.default_rng(seed).permutation(data.n_rows) % folds
    metrics = {"r2": [], "rmse": [], "mape": []}
    for k in range(folds):
        test = assign == k
        tree = fit_tree(data.features[~test], target[~test], max_depth=depth)
        fid = fidelity(target[test], tree.predict(data.features[test]))
        for name in metrics:
            metrics[name].append(getattr(fid, name))
    return {name: (float(np.mean(v)), float(np.std(v))) for name, v in metrics.items()}


def export_dot(tree: DecisionTree, feature_names) -> str:
    lines = ["digraph surrogate {", '  node [shape=box, fontname="Helvetica"];']
    for i in range(tree.n_nodes):
        f = int(tree.feature[i])
        if f == LEAF:
            label = f"{tree.value[i]:.6g}\\ncover = {tree.cover[i]:.6g}"
        else:
            label = f"{feature_names[f]} < {tree.threshold[i]:.6g}"
        lines.append(f'  n{i} [label="{label}"];')
    for i in range(tree.n_nodes):
        if tree.feature[i] != LEAF:
            lines.append(f'  n{i} -> n{tree.left[i]} [label="yes"];')
            lines.append(f'  n{i} -> n{tree.right[i]} [label="no"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
