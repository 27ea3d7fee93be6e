"""CART-style regression trees with monotone constraints.

Trees are stored as flat node arrays (root at index 0, children always
created after their parent) which keeps prediction and the Shapley
machinery vectorisable. ``TreeNode`` gives a nested view for
serialisation and for code that prefers to walk objects.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..errors import ModelError

LEAF = -1


@dataclass
class TreeNode:
    cover: float
    leaf_value: Optional[float] = None
    split_feature: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    gain: float = 0.0
    node_value: Optional[float] = None  # fitted value of an internal node, kept for lossless round trips

    @property
    def is_leaf(self) -> bool:
        return self.split_feature is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"cover": self.cover, "leaf_value": self.leaf_value}
        return {
            "split_feature": self.split_feature,
            "threshold": self.threshold,
            "cover": self.cover,
            "gain": self.gain,
            "node_value": self.node_value,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNode":
        if "split_feature" not in d:
            return cls(cover=float(d["cover"]), leaf_value=float(d["leaf_value"]))
        return cls(
            cover=float(d["cover"]),
            split_feature=int(d["split_feature"]),
            threshold=float(d["threshold"]),
            gain=float(d.get("gain", 0.0)),
            node_value=None if d.get("node_value") is None else float(d["node_value"]),
            left=cls.from_dict(d["left"]),
            right=cls.from_dict(d["right"]),
        )


class DecisionTree:
    """Binary tree; a row goes left when ``x[feature] < threshold``."""

    def __init__(self, feature, threshold, left, right, value, cover, gain=None,
                 depth: Optional[int] = None, feature_count: Optional[int] = None):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)
        self.cover = np.asarray(cover, dtype=float)
        self.gain = np.zeros(len(self.feature)) if gain is None else np.asarray(gain, dtype=float)
        self.feature_count = int(feature_count if feature_count is not None
                                 else max(int(self.feature.max(initial=-1)) + 1, 0))
        self.depth = int(depth if depth is not None else self.actual_depth())
        self._check()
        for a in (self.feature, self.threshold, self.left, self.right, self.value, self.cover, self.gain):
            a.setflags(write=False)
        self._means = None

    def _check(self):
        internal = self.feature != LEAF
        if np.any(self.feature[internal] >= self.feature_count):
            raise ModelError("split feature index out of range")
        if np.any((self.left[internal] <= np.flatnonzero(internal)) | (self.right[internal] <= np.flatnonzero(internal))):
            raise ModelError("children must follow their parent in node order")

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature == LEAF

    def actual_depth(self) -> int:
        return int(self.node_depths().max(initial=0))

    def node_depths(self) -> np.ndarray:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return depth

    def node_means(self) -> np.ndarray:
        """Cover-weighted mean leaf value of the subtree under each node."""
        if self._means is None:
            m = self.value.copy()
            for i in range(self.n_nodes - 1, -1, -1):
                if self.feature[i] != LEAF:
                    l, r = self.left[i], self.right[i]
                    c = self.cover[l] + self.cover[r]
                    if c <= 0:
                        raise ModelError(f"zero cover at internal node {i}")
                    m[i] = (self.cover[l] * m[l] + self.cover[r] * m[r]) / c
            m.setflags(write=False)
            self._means = m
        return self._means

    def used_features(self) -> np.ndarray:
        return np.unique(self.feature[self.feature != LEAF])

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] != LEAF)
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] < self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] != LEAF]
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_node(self, i: int = 0) -> TreeNode:
        if self.feature[i] == LEAF:
            return TreeNode(cover=float(self.cover[i]), leaf_value=float(self.value[i]))
        return TreeNode(
            cover=float(self.cover[i]),
            split_feature=int(self.feature[i]),
            threshold=float(self.threshold[i]),
            gain=float(self.gain[i]),
            node_value=float(self.value[i]),
            left=self.to_node(int(self.left[i])),
            right=self.to_node(int(self.right[i])),
        )

    @property
    def root(self) -> TreeNode:
        return self.to_node(0)

    @classmethod
    def from_node(cls, root: TreeNode, depth=None, feature_count=None) -> "DecisionTree":
        feature, threshold, left, right, value, cover, gain = [], [], [], [], [], [], []
        stack = [(root, None, None)]
        while stack:
            node, parent, side = stack.pop()
            i = len(feature)
            if parent is not None:
                (left if side == "l" else right)[parent] = i
            cover.append(node.cover)
            gain.append(node.gain)
            left.append(LEAF)
            right.append(LEAF)
            if node.is_leaf:
                feature.append(LEAF)
                threshold.append(0.0)
                value.append(node.leaf_value)
            else:
                feature.append(node.split_feature)
                threshold.append(node.threshold)
                value.append(np.nan if node.node_value is None else node.node_value)
                stack.append((node.right, i, "r"))
                stack.append((node.left, i, "l"))
        tree = cls(feature, threshold, left, right, value, cover, gain, depth=depth, feature_count=feature_count)
        missing = np.isnan(tree.value)
        if missing.any():
            v = tree.value.copy()
            v[missing] = tree.node_means()[missing]
            tree = cls(feature, threshold, left, right, v, cover, gain, depth=depth, feature_count=feature_count)
        return tree

    def to_dict(self) -> dict:
        return {"depth": self.depth, "feature_count": self.feature_count, "root": self.root.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        return cls.from_node(TreeNode.from_dict(d["root"]), depth=d["depth"], feature_count=d["feature_count"])

    def leaf_count(self) -> int:
        return int(np.sum(self.feature == LEAF))

    def __repr__(self):
        return f"DecisionTree(nodes={self.n_nodes}, leaves={self.leaf_count()}, depth={self.actual_depth()})"


def predict_tree(tree: DecisionTree, row) -> float:
    row = np.asarray(row, dtype=float)
    if row.shape != (tree.feature_count,) and tree.feature_count:
        raise ModelError(f"row has {row.size} values, tree expects {tree.feature_count}")
    i = 0
    while tree.feature[i] != LEAF:
        i = tree.left[i] if row[tree.feature[i]] < tree.threshold[i] else tree.right[i]
    return float(tree.value[i])


def fit_tree(features, targets, row_weights=None, max_depth: int = 3, min_samples_leaf: int = 1,
             constraints: Optional[Sequence[int]] = None, value_bounds=(-np.inf, np.inf)) -> DecisionTree:
    """Greedy weighted-least-squares regression tree.

    Leaves predict the weighted target mean clipped to ``value_bounds``.
    With ``constraints[j] = +1`` (or -1) every split on feature j must put
    a left leaf value no greater (no smaller) than the right one, and the
    children inherit bounds cut at the midpoint of the two values.
    """
    X = np.asarray(features, dtype=float)
    t = np.asarray(targets, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ModelError("fit_tree needs a non-empty 2-d feature matrix")
    if t.shape != (X.shape[0],):
        raise ModelError("targets length does not match feature rows")
    if not np.all(np.isfinite(t)):
        raise ModelError("targets must be finite")
    w = np.ones_like(t) if row_weights is None else np.asarray(row_weights, dtype=float)
    if w.shape != t.shape or np.any(w < 0):
        raise ModelError("row_weights must be non-negative and match targets")
    return grow_tree(X, w * t, w, np.arange(X.shape[0]), np.arange(X.shape[1]),
                     max_depth=max_depth, min_samples_leaf=min_samples_leaf,
                     constraints=constraints, value_bounds=value_bounds)


def grow_tree(X: np.ndarray, wt: np.ndarray, w: np.ndarray, rows: np.ndarray, feats: np.ndarray,
              max_depth: int, min_samples_leaf: int = 1, constraints=None,
              value_bounds=(-np.inf, np.inf), XT: Optional[np.ndarray] = None) -> DecisionTree:
    """Grow a tree on ``rows`` using only the columns in ``feats``.

    ``wt`` holds per-row weight*target and ``w`` the weights, both indexed
    by the global row id; a node predicts ``sum(wt) / sum(w)`` so callers
    can pass gradient/hessian pairs directly.
    """
    if max_depth < 0:
        raise ModelError("max_depth must be >= 0")
    n_features = X.shape[1]
    if constraints is None:
        constraints = np.zeros(n_features, dtype=np.int64)
    constraints = np.asarray(constraints, dtype=np.int64)
    if constraints.shape != (n_features,):
        raise ModelError("one constraint per feature is required")
    msl = max(1, int(min_samples_leaf))
    if XT is None:
        XT = np.ascontiguousarray(X.T)
    feats = np.sort(np.asarray(feats, dtype=np.int64))
    rows = np.asarray(rows, dtype=np.int64)
    fdir = constraints[feats][:, None]

    order = np.argsort(XT[feats][:, rows], axis=1, kind="stable")
    order = rows[order]

    feature, threshold, left, right, value, cover, gain = [], [], [], [], [], [], []
    lo0, hi0 = value_bounds
    mark = np.zeros(X.shape[0], dtype=bool)

    # nodes get their index when popped, which yields pre-order numbering
    stack = [(None, None, order, 0, lo0, hi0)]
    while stack:
        parent, side, order, depth, lo, hi = stack.pop()
        idx = len(feature)
        for arr, v0 in ((feature, LEAF), (threshold, 0.0), (left, LEAF), (right, LEAF),
                        (value, 0.0), (cover, 0.0), (gain, 0.0)):
            arr.append(v0)
        if parent is not None:
            (left if side == "l" else right)[parent] = idx
        n = order.shape[1]
        node_rows = order[0]
        G = float(wt[node_rows].sum())
        H = float(w[node_rows].sum())
        c_parent = min(max(G / H, lo), hi) if H > 0 else min(max(0.0, lo), hi)
        value[idx] = c_parent
        cover[idx] = float(n)
        if depth >= max_depth or n < 2 * msl or H <= 0:
            continue

        vals = XT[feats[:, None], order]
        gc = np.cumsum(wt[order], axis=1)[:, :-1]
        hc = np.cumsum(w[order], axis=1)[:, :-1]
        n_left = np.arange(1, n)
        valid = vals[:, :-1] < vals[:, 1:]
        valid &= (n_left >= msl) & (n - n_left >= msl)
        gr = G - gc
        hr = H - hc
        valid &= (hc > 0) & (hr > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            cl = np.clip(gc / hc, lo, hi)
            cr = np.clip(gr / hr, lo, hi)
        valid &= ~((fdir > 0) & (cl > cr))
        valid &= ~((fdir < 0) & (cl < cr))
        parent_loss = -2.0 * c_parent * G + c_parent * c_parent * H
        g = parent_loss - (-2.0 * cl * gc + cl * cl * hc) - (-2.0 * cr * gr + cr * cr * hr)
        g = np.where(valid, g, -np.inf)
        best = int(np.argmax(g))
        fi, pos = divmod(best, n - 1)
        best_gain = g[fi, pos]
        if not np.isfinite(best_gain) or best_gain <= 1e-12 * max(1.0, abs(parent_loss)):
            continue

        f = int(feats[fi])
        a, b = vals[fi, pos], vals[fi, pos + 1]
        thr = 0.5 * (a + b)
        if not a < thr <= b:
            thr = b
        feature[idx] = f
        threshold[idx] = float(thr)
        gain[idx] = float(best_gain)

        left_rows = order[fi, : pos + 1]
        mark[left_rows] = True
        lm = mark[order]
        mark[left_rows] = False
        n_l = pos + 1
        left_order = order[lm].reshape(len(feats), n_l)
        right_order = order[~lm].reshape(len(feats), n - n_l)

        lo_l, hi_l, lo_r, hi_r = lo, hi, lo, hi
        d = constraints[f]
        if d != 0:
            mid = 0.5 * (cl[fi, pos] + cr[fi, pos])
            if d > 0:
                hi_l, lo_r = mid, mid
            else:
                lo_l, hi_r = mid, mid
        stack.append((idx, "r", right_order, depth + 1, lo_r, hi_r))
        stack.append((idx, "l", left_order, depth + 1, lo_l, hi_l))

    return DecisionTree(feature, threshold, left, right, value, cover, gain,
                        depth=max_depth, feature_count=n_features)
