"""Sparse local linear explanations (LIME) with a weighted LASSO."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .data import DEFAULT_SEED, Dataset, column_stats, lower_quantile_index
from .errors import ConvergenceError, DataError

LASSO_TOL = 1e-7
LASSO_MAX_SWEEPS = 10000


@dataclass(frozen=True)
class LimeConfig:
    n_samples: int = 5000
    kernel_width: Optional[float] = None   # None: 0.75 * sqrt(P)
    lambda_grid: Optional[tuple] = None    # None: 50 geometric steps below lambda_max
    target_nonzero: int = 8
    discretize: tuple = ()
    bins_per_feature: int = 4
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.kernel_width is not None and self.kernel_width <= 0:
            raise DataError("kernel_width must be positive")
        if self.lambda_grid is not None:
            g = np.asarray(self.lambda_grid, dtype=float)
            if g.size == 0 or np.any(g < 0) or np.any(np.diff(g) > 0):
                raise DataError("lambda_grid must be non-empty, non-negative and descending")
            object.__setattr__(self, "lambda_grid", tuple(float(v) for v in g))
        if self.bins_per_feature < 2:
            raise DataError("bins_per_feature must be >= 2")
        if self.target_nonzero < 0:
            raise DataError("target_nonzero must be >= 0")
        object.__setattr__(self, "discretize", tuple(sorted(set(int(j) for j in self.discretize))))

    def width_for(self, n_features: int) -> float:
        return self.kernel_width if self.kernel_width is not None else 0.75 * math.sqrt(n_features)


@dataclass
class LimeExplanation:
    contributions: np.ndarray
    intercept: float
    local_r2: float
    surrogate_prediction: float
    model_prediction: float
    nonzero_count: int
    lambda_used: float
    feature_names: tuple = ()
    coefficients: dict = field(default_factory=dict)
    config: Optional[LimeConfig] = None

    def to_dict(self) -> dict:
        names = self.feature_names or tuple(f"x{j}" for j in range(len(self.contributions)))
        return {
            "intercept": self.intercept,
            "local_r2": self.local_r2,
            "surrogate_prediction": self.surrogate_prediction,
            "model_prediction": self.model_prediction,
            "nonzero_count": self.nonzero_count,
            "lambda_used": self.lambda_used,
            "contributions": {n: float(c) for n, c in zip(names, self.contributions)},
            "coefficients": self.coefficients,
            "config": asdict(self.config) if self.config else None,
        }


def sample_locality(x, stats: Sequence, n: int, seed: int = DEFAULT_SEED) -> np.ndarray:
    """n rows of x plus normal noise with each column's training std (zero std keeps x_j fixed)."""
    x = np.asarray(x, dtype=float)
    if len(stats) != x.size:
        raise DataError("need column statistics for every feature")
    std = np.array([s.std for s in stats], dtype=float)
    noise = np.random.default_rng(seed).standard_normal((n, x.size))
    return x[None, :] + noise * std[None, :]


def kernel_weights(x, samples, width: float, stats: Sequence) -> np.ndarray:
    """exp(-d^2 / width^2) with d the Euclidean distance in standardised units."""
    if width <= 0:
        raise DataError("kernel width must be positive")
    std = np.array([s.std for s in stats], dtype=float)
    scale = np.where(std > 0, std, 1.0)
    z = (np.asarray(samples, dtype=float) - np.asarray(x, dtype=float)[None, :]) / scale
    z[:, std == 0] = 0.0
    return np.exp(-(z * z).sum(axis=1) / (width * width))


@dataclass
class _Standardised:
    mean: np.ndarray
    scale: np.ndarray
    active: np.ndarray
    y_mean: float
    gram: np.ndarray
    xty: np.ndarray


def _standardise(Z, y, w) -> _Standardised:
    W = w.sum()
    mu = (w @ Z) / W
    C = Z - mu
    var = (w @ (C * C)) / W
    scale = np.sqrt(var)
    active = scale > 1e-12 * np.maximum(1.0, np.abs(mu))
    scale = np.where(active, scale, 1.0)
    S = C / scale
    S[:, ~active] = 0.0
    ym = float(w @ y) / W
    Sw = S * (w / W)[:, None]
    return _Standardised(mu, scale, active, ym, Sw.T @ S, Sw.T @ (y - ym))


def _coordinate_descent(st: _Standardised, lam: float, b: np.ndarray, tol: float, max_sweeps: int):
    """Cyclic soft-threshold updates on standardised columns; b is updated in place."""
    thresh = lam / st.scale
    G, c = st.gram, st.xty
    idx = np.flatnonzero(st.active)
    for sweep in range(1, max_sweeps + 1):
        biggest = 0.0
        for j in idx:
            rho = c[j] - G[j] @ b + G[j, j] * b[j]
            new = math.copysign(max(abs(rho) - thresh[j], 0.0), rho) / G[j, j]
            delta = abs(new - b[j])
            if delta > biggest:
                biggest = delta
            b[j] = new
        if biggest < tol:
            return sweep
    return -max_sweeps


def _raw(st: _Standardised, b):
    beta = np.where(st.active, b / st.scale, 0.0)
    return st.y_mean - float(st.mean @ beta), beta


def fit_lasso(design, targets, weights, lam: float, tol: float = LASSO_TOL,
              max_sweeps: int = LASSO_MAX_SWEEPS):
    """Weighted LASSO by cyclic coordinate descent.

    Minimises (1/2W) sum_i w_i (y_i - b0 - z_i.b)^2 + lam * sum_j |b_j| with
    an unpenalised intercept. Columns are standardised internally for
    conditioning and coefficients are returned on the original scale.
    Raises ``ConvergenceError`` (holding the last iterate) if the largest
    coefficient change is still above ``tol`` after ``max_sweeps`` sweeps.
    """
    Z = np.asarray(design, dtype=float)
    y = np.asarray(targets, dtype=float)
    w = np.asarray(weights, dtype=float)
    if Z.ndim != 2 or y.shape != (Z.shape[0],) or w.shape != y.shape:
        raise DataError("design, targets and weights have inconsistent shapes")
    if lam < 0 or not (np.all(np.isfinite(Z)) and np.all(np.isfinite(y)) and np.all(np.isfinite(w))):
        raise DataError("lasso inputs must be finite and lambda non-negative")
    if np.any(w < 0) or w.sum() <= 0:
        raise DataError("weights must be non-negative with a positive sum")
    st = _standardise(Z, y, w)
    b = np.zeros(Z.shape[1])
    sweeps = _coordinate_descent(st, lam, b, tol, max_sweeps)
    b0, beta = _raw(st, b)
    if sweeps < 0:
        raise ConvergenceError(f"lasso did not converge in {max_sweeps} sweeps", b0, beta, max_sweeps)
    return b0, beta


def lambda_max(design, targets, weights) -> float:
    """Smallest lambda at which every coefficient is zero."""
    Z = np.asarray(design, dtype=float)
    y = np.asarray(targets, dtype=float)
    w = np.asarray(weights, dtype=float)
    W = w.sum()
    cov = ((Z - (w @ Z) / W) * (w / W)[:, None]).T @ (y - (w @ y) / W)
    return float(np.abs(cov).max(initial=0.0))


def lasso_kkt_residual(design, targets, weights, lam, intercept, coef) -> float:
    """Largest violation of the LASSO subgradient optimality conditions."""
    Z = np.asarray(design, dtype=float)
    w = np.asarray(weights, dtype=float)
    W = w.sum()
    r = np.asarray(targets, dtype=float) - intercept - Z @ coef
    grad = -(Z.T @ (w * r)) / W
    nz = coef != 0
    viol = np.where(nz, np.abs(grad + lam * np.sign(coef)), np.maximum(np.abs(grad) - lam, 0.0))
    return float(max(viol.max(initial=0.0), abs(w @ r) / W))


class _Design:
    """Raw columns, with selected features replaced by one-hot quantile bins."""

    def __init__(self, data: Dataset, discretize, bins: int):
        self.n_features = data.n_cols
        self.edges = {}
        for j in discretize:
            if not 0 <= j < data.n_cols:
                raise DataError(f"discretize index {j} out of range")
            col = np.sort(data.features[:, j])
            levels = [k / bins for k in range(1, bins)]
            self.edges[j] = np.array([col[lower_quantile_index(q, col.size)] for q in levels])
        self.columns = []  # (feature, bin or None)
        for j in range(data.n_cols):
            if j in self.edges:
                self.columns.extend((j, k) for k in range(bins))
            else:
                self.columns.append((j, None))
        self.owner = np.array([c[0] for c in self.columns], dtype=np.int64)

    def build(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        out = np.empty((X.shape[0], len(self.columns)))
        bins = {j: np.searchsorted(e, X[:, j], side="right") for j, e in self.edges.items()}
        for c, (j, k) in enumerate(self.columns):
            out[:, c] = X[:, j] if k is None else (bins[j] == k)
        return out

    def names(self, feature_names) -> list:
        return [feature_names[j] if k is None else f"{feature_names[j]}[bin{k}]" for j, k in self.columns]


def explain_lime(score: Callable, x, data: Dataset, config: LimeConfig = LimeConfig()) -> LimeExplanation:
    """Fit a sparse weighted linear model to ``score`` around the row x.

    The LASSO path runs down ``lambda_grid`` with warm starts and keeps the
    smallest lambda whose model uses at most ``target_nonzero`` features;
    if none qualifies the sparsest (largest-lambda) fit is used.
    """
    x = np.asarray(x, dtype=float)
    P = data.n_cols
    if x.shape != (P,):
        raise DataError(f"row has {x.size} values, data has {P} columns")
    if config.n_samples < 10 * P:
        raise DataError(f"n_samples must be at least 10 * P = {10 * P}")
    stats = column_stats(data)
    samples = sample_locality(x, stats, config.n_samples, config.seed)
    weights = kernel_weights(x, samples, config.width_for(P), stats)
    design = _Design(data, config.discretize, config.bins_per_feature)
    Z = design.build(samples)
    y = np.asarray(score(samples), dtype=float)
    st = _standardise(Z, y, weights)
    if not st.active.any():
        raise DataError("every design column is constant in the sampled locality")

    grid = config.lambda_grid
    if grid is None:
        top = float(np.abs(st.xty * st.scale).max())
        grid = tuple(np.geomspace(top, top * 1e-4, 50)) if top > 0 else (0.0,)
    b = np.zeros(Z.shape[1])
    fits = []
    for lam in grid:
        sweeps = _coordinate_descent(st, lam, b, LASSO_TOL, LASSO_MAX_SWEEPS)
        b0, beta = _raw(st, b)
        if sweeps < 0:
            raise ConvergenceError(f"lasso did not converge at lambda={lam:g}", b0, beta, LASSO_MAX_SWEEPS)
        used = np.unique(design.owner[beta != 0]).size
        fits.append((lam, b0, beta, used))
    ok = [f for f in fits if f[3] <= config.target_nonzero]
    lam, b0, beta, _ = ok[-1] if ok else fits[0]

    fitted = b0 + Z @ beta
    W = weights.sum()
    ybar = float(weights @ y) / W
    sst = float(weights @ (y - ybar) ** 2)
    sse = float(weights @ (y - fitted) ** 2)
    r2 = 1.0 if sst == 0 else 1.0 - sse / sst

    zx = design.build(x)[0]
    terms = beta * zx
    contributions = np.zeros(P)
    np.add.at(contributions, design.owner, terms)
    names = design.names(data.feature_names)
    return LimeExplanation(
        contributions=contributions,
        intercept=float(b0),
        local_r2=float(r2),
        surrogate_prediction=float(b0 + terms.sum()),
        model_prediction=float(np.asarray(score(x[None, :]), dtype=float)[0]),
        nonzero_count=int(np.count_nonzero(contributions)),
        lambda_used=float(lam),
        feature_names=data.feature_names,
        coefficients={n: float(c) for n, c in zip(names, beta)},
        config=config,
    )


def lime_cv_std(score: Callable, x, data: Dataset, config: LimeConfig = LimeConfig(), repeats: int = 5,
                seeds: Optional[Sequence[int]] = None) -> np.ndarray:
    """Population std of each contribution over repeated runs with different seeds.

    Seeds default to ``config.seed + k`` for k = 0..repeats-1.
    """
    if repeats < 2:
        raise DataError("repeats must be >= 2")
    seeds = [config.seed + k for k in range(repeats)] if seeds is None else list(seeds)
    if len(seeds) != repeats:
        raise DataError("need one seed per repeat")
    runs = []
    for s in seeds:
        cfg = LimeConfig(**{**asdict(config), "seed": int(s)})
        runs.append(explain_lime(score, x, data, cfg).contributions)
    return np.std(np.array(runs), axis=0)
