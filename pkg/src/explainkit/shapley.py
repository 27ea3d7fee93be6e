"""Shapley attributions for boosted tree ensembles.

All attributions live on the margin (log-odds) scale, where the ensemble
is additive and ``base_value + sum(phi)`` reproduces the prediction
exactly. The value of a coalition S is the cover-weighted expectation of
the ensemble when the features outside S are marginalised along each
tree's own training distribution (``tree_expectation``).

Internally every tree is flattened into its leaves. A leaf reached by the
path nodes n contributes

    value * prod_n (feature(n) in S ? [x follows n] : cover(child) / cover(n))

to the coalition value, so a leaf is a small game over the distinct
features on its path. By linearity and the dummy property the ensemble's
Shapley values are the sums of these per-leaf values, which keeps exact
enumeration cheap: each leaf needs only 2**(distinct path features)
coalitions instead of 2**P.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.special import expit

from .data import DEFAULT_SEED, Dataset
from .errors import ModelError, ShapleyGuardError
from .model.gbm import GbmModel
from .model.tree import LEAF, DecisionTree

MAX_EXACT_FEATURES = 20
_CHUNK_ELEMENTS = 1 << 22


@dataclass
class ShapleyExplanation:
    phi: np.ndarray
    base_value: float
    prediction: float
    missing_mask: np.ndarray
    method: str
    feature_names: tuple = ()
    feature_values: Optional[np.ndarray] = None
    adjustment: float = 0.0
    residual: float = 0.0
    n_permutations: Optional[int] = None
    reference_mean: Optional[float] = None

    @property
    def prediction_proba(self) -> float:
        return float(expit(self.prediction))

    @property
    def additivity_gap(self) -> float:
        return float(self.prediction - self.base_value - self.phi.sum())

    def to_dict(self) -> dict:
        names = self.feature_names or tuple(f"x{j}" for j in range(len(self.phi)))
        values = self.feature_values if self.feature_values is not None else np.full(len(self.phi), np.nan)
        return {
            "method": self.method,
            "space": "margin",
            "link": "logit",
            "base_value": float(self.base_value),
            "prediction_margin": float(self.prediction),
            "prediction_proba": self.prediction_proba,
            "adjustment": float(self.adjustment),
            "pre_adjustment_residual": float(self.residual),
            "n_permutations": self.n_permutations,
            "reference_mean": self.reference_mean,
            "features": [
                {"name": n, "value": _json_float(v), "phi": float(p), "present": not bool(m)}
                for n, v, p, m in zip(names, values, self.phi, self.missing_mask)
            ],
        }


def _json_float(v):
    v = float(v)
    return None if math.isnan(v) else v


@dataclass
class SummaryReport:
    feature_names: tuple
    mean_abs_phi: np.ndarray
    phi_values: np.ndarray
    feature_values: np.ndarray
    ordering: np.ndarray
    rows: np.ndarray
    method: str
    base_value: float = 0.0

    def top(self, k: int) -> list:
        return [self.feature_names[j] for j in self.ordering[:k]]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "space": "margin",
            "base_value": float(self.base_value),
            "rows": [int(r) for r in self.rows],
            "ordering": [self.feature_names[j] for j in self.ordering],
            "features": [
                {"name": self.feature_names[j], "mean_abs_phi": float(self.mean_abs_phi[j])}
                for j in self.ordering
            ],
        }


# ---------------------------------------------------------------------------
# coalition values
# ---------------------------------------------------------------------------

def tree_expectation(tree: DecisionTree, x, present) -> float:
    """Expected tree output with features outside ``present`` marginalised by cover."""
    x = np.asarray(x, dtype=float)
    present = set(int(j) for j in present)

    def walk(i):
        f = tree.feature[i]
        if f == LEAF:
            return float(tree.value[i])
        l, r = tree.left[i], tree.right[i]
        if f in present:
            return walk(l if x[f] < tree.threshold[i] else r)
        c = tree.cover[i]
        if c <= 0:
            raise ModelError(f"zero cover at internal node {i}")
        return (tree.cover[l] * walk(l) + tree.cover[r] * walk(r)) / c

    return walk(0)


def coalition_value(model: GbmModel, x, present) -> float:
    """Margin-space value of a coalition: base + lr * sum of tree expectations."""
    return model.base_score + model.learning_rate * sum(tree_expectation(t, x, present) for t in model.trees)


@dataclass
class LeafTable:
    """Every leaf of an ensemble with its path summarised per distinct feature."""

    feat: np.ndarray    # (L, D) feature per path slot, -1 padding
    lo: np.ndarray      # (L, D) row follows the path iff lo <= x < hi
    hi: np.ndarray
    ratio: np.ndarray   # (L, D) product of cover ratios for that feature
    width: np.ndarray   # (L,) distinct path features
    value: np.ndarray   # (L,) learning_rate * leaf value
    tree: np.ndarray    # (L,) owning tree
    base: float         # coalition value of the empty set
    n_features: int
    intercept: float = 0.0
    _tree_maps: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, model: GbmModel) -> "LeafTable":
        rows = []
        base = model.base_score
        for t, tree in enumerate(model.trees):
            base += model.learning_rate * float(tree.node_means()[0])
            stack = [(0, {})]
            while stack:
                i, path = stack.pop()
                f = int(tree.feature[i])
                if f == LEAF:
                    rows.append((t, model.learning_rate * float(tree.value[i]), path))
                    continue
                c = tree.cover[i]
                if c <= 0:
                    raise ModelError(f"zero cover at internal node {i} of tree {t}")
                thr = float(tree.threshold[i])
                for child, side in ((int(tree.left[i]), "l"), (int(tree.right[i]), "r")):
                    lo, hi, r = path.get(f, (-np.inf, np.inf, 1.0))
                    if side == "l":
                        hi = min(hi, thr)
                    else:
                        lo = max(lo, thr)
                    p = dict(path)
                    p[f] = (lo, hi, r * float(tree.cover[child]) / float(c))
                    stack.append((child, p))
        L = len(rows)
        D = max((len(p) for _, _, p in rows), default=0)
        D = max(D, 1)
        feat = np.full((L, D), -1, dtype=np.int64)
        lo = np.full((L, D), -np.inf)
        hi = np.full((L, D), np.inf)
        ratio = np.ones((L, D))
        width = np.zeros(L, dtype=np.int64)
        value = np.zeros(L)
        tree_of = np.zeros(L, dtype=np.int64)
        for k, (t, v, path) in enumerate(rows):
            tree_of[k] = t
            value[k] = v
            width[k] = len(path)
            for i, f in enumerate(sorted(path)):
                feat[k, i] = f
                lo[k, i], hi[k, i], ratio[k, i] = path[f]
        return cls(feat, lo, hi, ratio, width, value, tree_of, float(base), model.n_features, model.base_score)

    def follows(self, X: np.ndarray, leaves=None, width=None) -> np.ndarray:
        """(rows, leaves, slots) indicator that each row satisfies each path slot."""
        sl = slice(None) if leaves is None else leaves
        w = self.feat.shape[1] if width is None else width
        f = self.feat[sl, :w]
        xv = X[:, np.maximum(f, 0)]
        return (xv >= self.lo[sl, :w]) & (xv < self.hi[sl, :w])

    def slot_factors(self, X, missing, leaves, width):
        """Per-slot factor when the feature joins the coalition.

        Missing features never join, so their "joined" factor is the
        marginalised ratio itself; that makes them dummy players.
        """
        ok = self.follows(X, leaves, width).astype(float)
        r = self.ratio[leaves, :width]
        if missing is not None and missing.any():
            f = self.feat[leaves, :width]
            miss = missing[:, np.maximum(f, 0)] & (f >= 0)
            ok = np.where(miss, r[None], ok)
        return ok, r

    def coalition_values(self, X, missing, masks) -> np.ndarray:
        """Coalition values for the given global feature bitmasks, per row."""
        X = np.atleast_2d(X)
        masks = np.asarray(masks, dtype=np.int64)
        out = np.full((X.shape[0], masks.size), self.intercept)
        idx = np.arange(len(self.value))
        ok, r = self.slot_factors(X, missing, idx, self.feat.shape[1])
        f = self.feat
        inS = ((masks[None, :, None] >> np.maximum(f, 0)[:, None, :]) & 1).astype(bool) & (f >= 0)[:, None, :]
        for b in range(X.shape[0]):
            fac = np.where(inS, ok[b][:, None, :], r[:, None, :])
            out[b] += self.value @ fac.prod(axis=2)
        return out

    def tree_maps(self, t: int):
        """Leaf ids, tree-local features and leaf-local index maps for tree t."""
        if t not in self._tree_maps:
            leaves = np.flatnonzero(self.tree == t)
            w = int(self.width[leaves].max(initial=0))
            feats = np.unique(self.feat[leaves, :w][self.feat[leaves, :w] >= 0])
            k = feats.size
            local = np.arange(1 << k)
            # leaf slot i is tree-local bit pos_i
            slot_bit = np.searchsorted(feats, np.maximum(self.feat[leaves, :w], 0))
            valid = self.feat[leaves, :w] >= 0
            idx = np.zeros((leaves.size, 1 << k), dtype=np.int64)
            for i in range(w):
                bit = ((local[None, :] >> slot_bit[:, i:i + 1]) & 1) & valid[:, i:i + 1]
                idx |= bit << i
            self._tree_maps[t] = (leaves, w, feats, idx)
        return self._tree_maps[t]


def leaf_table(model: GbmModel) -> LeafTable:
    table = getattr(model, "_leaf_table", None)
    if table is None or table.n_features != model.n_features:
        table = LeafTable.build(model)
        model._leaf_table = table
    return table


def _expand(value, ok, r):
    """Values of every sub-coalition of a leaf's slots, indexed by bitmask."""
    vals = np.broadcast_to(value[None, :, None], (ok.shape[0], ok.shape[1], 1))
    for i in range(ok.shape[2]):
        vals = np.concatenate([vals * r[None, :, i, None], vals * ok[:, :, i, None]], axis=2)
    return vals


def shapley_weights(m: int) -> np.ndarray:
    """|S|!(m-|S|-1)!/m! for |S| = 0..m-1."""
    return np.array([math.factorial(s) * math.factorial(m - s - 1) / math.factorial(m) for s in range(m)])


def shapley_matrix(m: int) -> np.ndarray:
    """(2**m, m) matrix C with phi = values @ C for a game given on all bitmasks."""
    w = shapley_weights(m)
    masks = np.arange(1 << m)
    size = np.array([bin(s).count("1") for s in masks])
    C = np.zeros((1 << m, m))
    for i in range(m):
        has = ((masks >> i) & 1).astype(bool)
        C[has, i] = w[size[has] - 1]
        C[~has, i] = -w[size[~has]]
    return C


def _missing(X) -> np.ndarray:
    return np.isnan(X)


def _exact_phi(table: LeafTable, X: np.ndarray, missing: np.ndarray) -> np.ndarray:
    n, P = X.shape
    phi = np.zeros((n, P))
    for m in np.unique(table.width):
        m = int(m)
        if m == 0:
            continue
        leaves = np.flatnonzero(table.width == m)
        C = shapley_matrix(m)
        scatter = sparse.csr_matrix(
            (np.ones(leaves.size * m), (np.arange(leaves.size * m), table.feat[leaves, :m].ravel())),
            shape=(leaves.size * m, P),
        )
        step = max(1, _CHUNK_ELEMENTS // (leaves.size << m))
        for s in range(0, n, step):
            Xc = X[s:s + step]
            ok, r = table.slot_factors(Xc, missing[s:s + step], leaves, m)
            contrib = _expand(table.value[leaves], ok, r) @ C
            phi[s:s + step] += np.asarray(scatter.T @ contrib.reshape(Xc.shape[0], -1).T).T
    return phi


def _margins(model: GbmModel, table: LeafTable, X, missing) -> np.ndarray:
    """Prediction on the margin scale; missing features are marginalised."""
    out = np.empty(X.shape[0])
    has_missing = missing.any(axis=1)
    if (~has_missing).any():
        out[~has_missing] = model.predict_margin(X[~has_missing])
    if has_missing.any():
        Xm = X[has_missing]
        mm = missing[has_missing]
        full = np.zeros(Xm.shape[0], dtype=np.int64)
        for j in range(X.shape[1]):
            full |= (~mm[:, j]).astype(np.int64) << j
        out[has_missing] = [table.coalition_values(Xm[i:i + 1], mm[i:i + 1], [full[i]])[0, 0]
                            for i in range(Xm.shape[0])]
    return out


# ---------------------------------------------------------------------------
# permutation sampling
# ---------------------------------------------------------------------------

def _permutations(n_rows: int, P: int, n_permutations: int, rng) -> tuple:
    """Sampled permutations per row, or every permutation when that is cheaper."""
    if P <= 8 and n_permutations >= math.factorial(P):
        allp = np.array(list(itertools.permutations(range(P))), dtype=np.int64)
        return np.broadcast_to(allp, (n_rows,) + allp.shape), True
    base = np.tile(np.arange(P, dtype=np.int64), (n_rows * n_permutations, 1))
    perms = rng.permuted(base, axis=1).reshape(n_rows, n_permutations, P)
    return perms, False


def _table_cost(table: LeafTable, P: int) -> float:
    cost = 0.0
    for t in np.unique(table.tree):
        leaves = table.tree == t
        k = np.unique(table.feat[leaves][table.feat[leaves] >= 0]).size
        cost += leaves.sum() * float(1 << k) + float(1 << P)
    return cost


def _sampled_table(table: LeafTable, X, missing, perms) -> np.ndarray:
    """Permutation estimate via a full per-row table of coalition values."""
    n, P = X.shape
    phi = np.zeros((n, P))
    n_perm = perms.shape[1]
    gmask = np.arange(1 << P)
    trees = np.unique(table.tree)
    step = max(1, _CHUNK_ELEMENTS // (1 << P))
    for s in range(0, n, step):
        Xc = X[s:s + step]
        mc = missing[s:s + step]
        b = Xc.shape[0]
        g = np.full((b, 1 << P), table.intercept)
        for t in trees:
            leaves, w, feats, idx = table.tree_maps(int(t))
            if w == 0:
                continue
            ok, r = table.slot_factors(Xc, mc, leaves, w)
            vals = _expand(table.value[leaves], ok, r)
            E = np.take_along_axis(vals, np.broadcast_to(idx[None], (b,) + idx.shape), axis=2).sum(axis=1)
            gl = np.zeros(1 << P, dtype=np.int64)
            for j, f in enumerate(feats):
                gl |= ((gmask >> f) & 1) << j
            g += E[:, gl]
        pc = perms[s:s + step]
        prefix = np.concatenate([np.zeros((b, n_perm, 1), dtype=np.int64),
                                 np.cumsum(np.left_shift(1, pc), axis=2)], axis=2)
        vals = np.take_along_axis(g[:, None, :], prefix.reshape(b, 1, -1), axis=2).reshape(prefix.shape)
        diffs = np.diff(vals, axis=2)
        inv = np.argsort(pc, axis=2)
        phi[s:s + step] = np.take_along_axis(diffs, inv, axis=2).mean(axis=1)
    return phi


def _sampled_kernel(table: LeafTable, X, missing, perms) -> np.ndarray:
    from ._kernels import permutation_marginals

    phi = np.zeros(X.shape)
    permutation_marginals(table.feat, table.lo, table.hi, table.ratio, table.width, table.value,
                          np.ascontiguousarray(X), np.ascontiguousarray(missing),
                          np.ascontiguousarray(perms), phi)
    return phi


def _distribute(phi, residual):
    """Spread the additivity residual over features in proportion to |phi|."""
    mag = np.abs(phi)
    tot = mag.sum(axis=1, keepdims=True)
    share = np.divide(mag, tot, out=np.zeros_like(mag), where=tot > 0)
    return phi + residual[:, None] * share


# ---------------------------------------------------------------------------
# batch entry points
# ---------------------------------------------------------------------------

@dataclass
class Attributions:
    phi: np.ndarray
    base_value: float
    prediction: np.ndarray
    missing: np.ndarray
    method: str
    residual: np.ndarray
    adjustment: np.ndarray
    n_permutations: Optional[int] = None


def attributions(model: GbmModel, X, method: str = "exact", n_permutations: int = 1000,
                 seed: int = DEFAULT_SEED, engine: str = "auto") -> Attributions:
    """Shapley (or path) attributions for every row of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_features:
        raise ModelError(f"rows have {X.shape[1]} columns, model expects {model.n_features}")
    n, P = X.shape
    if method == "path":
        phi, base = _path_phi(model, X)
        pred = model.predict_margin(X)
        zero = np.zeros(n)
        return Attributions(phi, base, pred, np.zeros_like(X, dtype=bool), "path", pred - base - phi.sum(1), zero)
    table = leaf_table(model)
    missing = _missing(X)
    pred = _margins(model, table, X, missing)
    if method == "exact":
        if P > MAX_EXACT_FEATURES:
            raise ShapleyGuardError(
                f"exact enumeration is limited to {MAX_EXACT_FEATURES} features (model has {P}); "
                "use the sampled method")
        phi = _exact_phi(table, X, missing)
        phi[missing] = 0.0  # exact by construction; clears rounding residue
        resid = pred - table.base - phi.sum(axis=1)
        return Attributions(phi, table.base, pred, missing, "exact", resid, np.zeros(n))
    if method == "sampled":
        if n_permutations < 1:
            raise ModelError("n_permutations must be >= 1")
        rng = np.random.default_rng(seed)
        perms, exhaustive = _permutations(n, P, n_permutations, rng)
        if engine == "auto":
            kernel_cost = perms.shape[1] * float(table.width.sum())
            use_table = P <= 16 and _table_cost(table, P) < kernel_cost
            engine = "table" if use_table else "kernel"
        if engine == "table":
            phi = _sampled_table(table, X, missing, perms)
        elif engine == "kernel":
            phi = _sampled_kernel(table, X, missing, perms)
        else:
            raise ValueError(f"unknown engine {engine!r}")
        phi[missing] = 0.0
        resid = pred - table.base - phi.sum(axis=1)
        phi = _distribute(phi, resid)
        return Attributions(phi, table.base, pred, missing, "sampled", resid, np.abs(resid),
                            n_permutations=perms.shape[1])
    raise ValueError(f"unknown method {method!r}")


def _path_phi(model: GbmModel, X):
    n, P = X.shape
    phi = np.zeros((n, P))
    base = model.base_score
    rows_all = np.arange(n)
    for tree in model.trees:
        means = tree.node_means()
        base += model.learning_rate * float(means[0])
        node = np.zeros(n, dtype=np.int64)
        rows = rows_all[tree.feature[node] != LEAF]
        while rows.size:
            nd = node[rows]
            f = tree.feature[nd]
            child = np.where(X[rows, f] < tree.threshold[nd], tree.left[nd], tree.right[nd])
            np.add.at(phi, (rows, f), model.learning_rate * (means[child] - means[nd]))
            node[rows] = child
            rows = rows[tree.feature[child] != LEAF]
    return phi, base


def explanation_for(model, att: Attributions, x, i=0, reference_mean=None) -> ShapleyExplanation:
    return ShapleyExplanation(
        phi=att.phi[i],
        base_value=att.base_value,
        prediction=float(att.prediction[i]),
        missing_mask=att.missing[i],
        method=att.method,
        feature_names=tuple(model.feature_names),
        feature_values=np.asarray(x, dtype=float),
        adjustment=float(att.adjustment[i]),
        residual=float(att.residual[i]),
        n_permutations=att.n_permutations,
        reference_mean=reference_mean,
    )


def _reference_mean(model, reference):
    if reference is None:
        return None
    R = reference.features if isinstance(reference, Dataset) else np.asarray(reference, dtype=float)
    return float(model.predict_margin(R).mean())


def shapley_exact(model: GbmModel, x, reference=None, marginalization: str = "tree_path") -> ShapleyExplanation:
    """Exact Shapley values by enumerating every coalition.

    ``marginalization="tree_path"`` (default) uses the trees' covers;
    ``"interventional"`` averages the model over ``reference`` rows with
    the absent features taken from the reference, for cross-checking.
    When a reference is supplied its mean margin is reported alongside
    the cover-based base value.
    """
    x = np.asarray(x, dtype=float)
    if marginalization == "interventional":
        return _interventional_exact(model, x, reference)
    if marginalization != "tree_path":
        raise ValueError(f"unknown marginalization {marginalization!r}")
    att = attributions(model, x[None, :], "exact")
    return explanation_for(model, att, x, reference_mean=_reference_mean(model, reference))


def _interventional_exact(model, x, reference) -> ShapleyExplanation:
    if reference is None:
        raise ModelError("interventional marginalisation needs reference rows")
    R = reference.features if isinstance(reference, Dataset) else np.asarray(reference, dtype=float)
    P = model.n_features
    if P > MAX_EXACT_FEATURES:
        raise ShapleyGuardError(f"exact enumeration is limited to {MAX_EXACT_FEATURES} features")
    masks = np.arange(1 << P)
    bits = ((masks[:, None] >> np.arange(P)) & 1).astype(bool)
    values = np.empty(masks.size)
    for s in range(masks.size):
        hybrid = np.where(bits[s][None, :], x[None, :], R)
        values[s] = model.predict_margin(hybrid).mean()
    phi = values @ shapley_matrix(P)
    base = float(values[0])
    return ShapleyExplanation(phi, base, float(values[-1]), np.zeros(P, dtype=bool), "exact",
                              tuple(model.feature_names), x, reference_mean=base,
                              residual=float(values[-1] - base - phi.sum()))


def shapley_sampled(model: GbmModel, x, reference=None, n_permutations: int = 1000,
                    seed: int = DEFAULT_SEED, engine: str = "auto") -> ShapleyExplanation:
    """Permutation-sampling estimate of the Shapley values.

    The mean marginal contribution over sampled orderings; any residual
    against the prediction is spread over features in proportion to
    ``|phi|`` and its size reported as ``adjustment``. If
    ``n_permutations`` covers every ordering (up to 8 features) all of
    them are enumerated instead.
    """
    x = np.asarray(x, dtype=float)
    att = attributions(model, x[None, :], "sampled", n_permutations=n_permutations, seed=seed, engine=engine)
    return explanation_for(model, att, x, reference_mean=_reference_mean(model, reference))


def treeinterpreter_path(model: GbmModel, x) -> ShapleyExplanation:
    """Attribute the change in subtree mean along the row's decision path to each split feature."""
    x = np.asarray(x, dtype=float)
    att = attributions(model, x[None, :], "path")
    return explanation_for(model, att, x)


def summarize(model: GbmModel, data: Dataset, method: str = "exact", budget: Optional[int] = None,
              seed: int = DEFAULT_SEED, n_permutations: int = 100) -> SummaryReport:
    """Per-row attributions over ``data`` aggregated into a global ranking."""
    if data.n_rows == 0:
        raise ModelError("summarize needs at least one row")
    rows = np.arange(data.n_rows)
    if budget is not None and budget < data.n_rows:
        rows = np.sort(np.random.default_rng(seed).choice(data.n_rows, size=budget, replace=False))
    X = data.features[rows]
    att = attributions(model, X, method, n_permutations=n_permutations, seed=seed)
    mean_abs = np.abs(att.phi).mean(axis=0)
    ordering = np.argsort(-mean_abs, kind="stable")
    return SummaryReport(tuple(data.feature_names), mean_abs, att.phi, X, ordering, rows, method, att.base_value)
