"""Binomial gradient boosting with optional monotone constraints."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata

from ..data import DEFAULT_SEED, Dataset, pearson
from ..errors import DataError, ModelError, UndefinedCorrelationError
from .tree import DecisionTree, grow_tree

log = logging.getLogger(__name__)

MODEL_FORMAT = "explainkit-gbm"
MODEL_VERSION = 1
LEAF_CLAMP = 4.0


@dataclass(frozen=True)
class GbmConfig:
    learning_rate: float = 0.08
    subsample: float = 0.9
    colsample: float = 0.9
    max_depth: int = 5
    max_rounds: int = 1000
    early_stopping_rounds: int = 50
    min_samples_leaf: int = 5
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if not 0 < self.learning_rate <= 1:
            raise ModelError("learning_rate must lie in (0, 1]")
        if not (0 < self.subsample <= 1 and 0 < self.colsample <= 1):
            raise ModelError("subsample and colsample must lie in (0, 1]")
        if self.max_depth < 1:
            raise ModelError("max_depth must be >= 1")
        if self.max_rounds < 1:
            raise ModelError("max_rounds must be >= 1")


@dataclass
class GbmModel:
    """Additive tree ensemble on the log-odds scale.

    ``predict`` returns ``logistic(base_score + learning_rate * sum(trees))``.
    Only the trees up to the best validation round are kept.
    """

    trees: list
    learning_rate: float
    base_score: float
    constraints: np.ndarray
    best_round: int
    feature_names: tuple = ()
    target_name: Optional[str] = None
    config: Optional[GbmConfig] = None
    history: dict = field(default_factory=dict)

    def __post_init__(self):
        self.constraints = np.asarray(self.constraints, dtype=np.int64)
        if self.feature_names and len(self.feature_names) != len(self.constraints):
            raise ModelError("constraints length must equal the feature count")

    @property
    def n_features(self) -> int:
        return len(self.constraints)

    def predict_margin(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ModelError(f"rows have {X.shape[1]} columns, model expects {self.n_features}")
        out = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out

    def predict(self, X) -> np.ndarray:
        return expit(self.predict_margin(X))

    __call__ = predict

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "learning_rate": self.learning_rate,
            "base_score": self.base_score,
            "constraints": [int(c) for c in self.constraints],
            "best_round": self.best_round,
            "feature_names": list(self.feature_names),
            "target_name": self.target_name,
            "config": asdict(self.config) if self.config else None,
            "history": self.history,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GbmModel":
        if d.get("format") != MODEL_FORMAT:
            raise ModelError("not an explainkit model document")
        if d.get("version") != MODEL_VERSION:
            raise ModelError(f"unsupported model version {d.get('version')}")
        return cls(
            trees=[DecisionTree.from_dict(t) for t in d["trees"]],
            learning_rate=float(d["learning_rate"]),
            base_score=float(d["base_score"]),
            constraints=np.asarray(d["constraints"], dtype=np.int64),
            best_round=int(d["best_round"]),
            feature_names=tuple(d.get("feature_names") or ()),
            target_name=d.get("target_name"),
            config=GbmConfig(**d["config"]) if d.get("config") else None,
            history=d.get("history") or {},
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True))

    @classmethod
    def load(cls, path) -> "GbmModel":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, ValueError, KeyError) as exc:
            raise ModelError(f"cannot read model {path}: {exc}") from exc


def predict(model: GbmModel, rows) -> np.ndarray:
    return model.predict(rows)


def auc(scores, labels) -> float:
    """Mann-Whitney AUC; tied scores count one half."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DataError("auc needs both classes")
    ranks = rankdata(s)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def log_loss(margin, labels) -> float:
    y = np.asarray(labels, dtype=float)
    # log(1 + e^m) - y m, stable for large |m|
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))


def monotone_from_correlation(data: Dataset, min_abs: float = 0.01) -> np.ndarray:
    """Constraint directions from the sign of each feature's correlation with the label."""
    if data.labels is None:
        raise DataError("labels are required to derive monotone constraints")
    out = np.zeros(data.n_cols, dtype=np.int64)
    for j in range(data.n_cols):
        try:
            r = pearson(data.features[:, j], data.labels)
        except UndefinedCorrelationError:
            continue
        if abs(r) >= min_abs:
            out[j] = 1 if r > 0 else -1
    return out


def fit_gbm(train: Dataset, valid: Dataset, config: GbmConfig = GbmConfig(),
            constraints: Optional[Sequence[int]] = None) -> GbmModel:
    """Boost regression trees on binomial-deviance gradients.

    Each round fits a tree to the current gradient with Newton leaf values
    (sum of residuals over sum of p(1-p), clamped to +/-4) on a row and
    column subsample. Validation AUC is tracked every round; training stops
    once it has not improved for ``early_stopping_rounds`` rounds and the
    ensemble is truncated at the best round.
    """
    for name, d in (("train", train), ("valid", valid)):
        if d.n_rows == 0:
            raise DataError(f"{name} dataset is empty")
        if d.labels is None:
            raise DataError(f"{name} dataset has no labels")
    if train.feature_names != valid.feature_names:
        raise DataError("train and valid feature layouts differ")
    y = train.labels.astype(float)
    yv = valid.labels
    if y.min() == y.max():
        raise DataError("training labels contain a single class")
    if yv.min() == yv.max():
        raise DataError("validation labels contain a single class")
    P = train.n_cols
    cons = np.zeros(P, dtype=np.int64) if constraints is None else np.asarray(constraints, dtype=np.int64)
    if cons.shape != (P,) or np.any(np.abs(cons) > 1):
        raise ModelError("constraints must hold one value in {-1, 0, 1} per feature")

    rng = np.random.default_rng(config.seed)
    X = np.ascontiguousarray(train.features)
    XT = np.ascontiguousarray(X.T)
    Xv = np.ascontiguousarray(valid.features)
    n = X.shape[0]
    n_rows = max(1, int(round(config.subsample * n)))
    n_cols = max(1, int(round(config.colsample * P)))

    p_bar = float(y.mean())
    base = float(np.log(p_bar / (1.0 - p_bar)))
    margin = np.full(n, base)
    margin_v = np.full(Xv.shape[0], base)

    trees, train_loss, valid_auc = [], [], []
    best_auc, best_round = -np.inf, 0
    for r in range(config.max_rounds):
        p = expit(margin)
        grad = y - p
        hess = np.maximum(p * (1.0 - p), 1e-12)
        rows = np.arange(n) if n_rows == n else np.sort(rng.choice(n, size=n_rows, replace=False))
        cols = np.arange(P) if n_cols == P else np.sort(rng.choice(P, size=n_cols, replace=False))
        tree = grow_tree(X, grad, hess, rows, cols, max_depth=config.max_depth,
                         min_samples_leaf=config.min_samples_leaf, constraints=cons,
                         value_bounds=(-LEAF_CLAMP, LEAF_CLAMP), XT=XT)
        trees.append(tree)
        margin += config.learning_rate * tree.predict(X)
        margin_v += config.learning_rate * tree.predict(Xv)
        train_loss.append(log_loss(margin, y))
        valid_auc.append(auc(margin_v, yv))
        if valid_auc[-1] > best_auc:
            best_auc, best_round = valid_auc[-1], r
        elif r - best_round >= config.early_stopping_rounds:
            break
    log.info("boosting stopped after %d rounds; best round %d with validation AUC %.4f",
             len(trees), best_round + 1, best_auc)
    return GbmModel(
        trees=trees[: best_round + 1],
        learning_rate=config.learning_rate,
        base_score=base,
        constraints=cons,
        best_round=best_round + 1,
        feature_names=train.feature_names,
        target_name=train.target_name,
        config=config,
        history={"train_log_loss": train_loss, "valid_auc": valid_auc, "rounds_run": len(trees)},
    )
