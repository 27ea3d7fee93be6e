"""Builders shared by the test modules."""

import numpy as np

from explainkit.data import Dataset
from explainkit.model import DecisionTree, GbmModel, TreeNode

UCI_COLUMNS = (
    "LIMIT_BAL", "SEX", "EDUCATION", "MARRIAGE", "AGE",
    "PAY_0", "PAY_2", "PAY_3", "PAY_4", "PAY_5", "PAY_6",
    "BILL_AMT1", "BILL_AMT2", "BILL_AMT3", "BILL_AMT4", "BILL_AMT5", "BILL_AMT6",
    "PAY_AMT1", "PAY_AMT2", "PAY_AMT3", "PAY_AMT4", "PAY_AMT5", "PAY_AMT6",
)


def random_node(rng, n_features, depth, max_depth, split_prob=0.8):
    if depth == max_depth or rng.uniform() > split_prob:
        return TreeNode(cover=float(rng.integers(1, 30)), leaf_value=float(rng.normal()))
    left = random_node(rng, n_features, depth + 1, max_depth, split_prob)
    right = random_node(rng, n_features, depth + 1, max_depth, split_prob)
    return TreeNode(cover=left.cover + right.cover, split_feature=int(rng.integers(n_features)),
                    threshold=float(rng.uniform(-0.8, 0.8)), left=left, right=right)


def random_tree(rng, n_features, max_depth=3):
    root = TreeNode(cover=0.0)
    while root.is_leaf:
        root = random_node(rng, n_features, 0, max_depth)
    return DecisionTree.from_node(root, depth=max_depth, feature_count=n_features)


def ensemble(trees, n_features, learning_rate=1.0, base_score=0.0, names=None):
    names = tuple(names or (f"f{j}" for j in range(n_features)))
    return GbmModel(trees=list(trees), learning_rate=learning_rate, base_score=base_score,
                    constraints=np.zeros(n_features, dtype=np.int64), best_round=len(trees), feature_names=names)


def stump(feature, threshold, left_value, right_value, n_features, left_cover=1.0, right_cover=1.0):
    root = TreeNode(cover=left_cover + right_cover, split_feature=feature, threshold=threshold,
                    left=TreeNode(cover=left_cover, leaf_value=left_value),
                    right=TreeNode(cover=right_cover, leaf_value=right_value))
    return DecisionTree.from_node(root, feature_count=n_features)


def uci_like(n_rows, seed=0):
    """Synthetic stand-in with the credit-card column layout.

    Repayment status, credit limit and the latest bill drive a logistic
    default probability; everything else is weakly related or noise.
    """
    rng = np.random.default_rng(seed)
    X = np.empty((n_rows, len(UCI_COLUMNS)))
    limit = np.maximum(rng.lognormal(11.5, 0.8, n_rows).round(-4), 1e4)
    X[:, 0] = limit
    X[:, 1] = rng.integers(1, 3, n_rows)
    X[:, 2] = rng.integers(1, 5, n_rows)
    X[:, 3] = rng.integers(1, 4, n_rows)
    X[:, 4] = rng.integers(21, 70, n_rows)
    pay = np.clip(rng.poisson(0.6, (n_rows, 6)) - rng.integers(0, 3, (n_rows, 6)), -2, 8)
    X[:, 5:11] = pay
    bill = np.abs(rng.normal(0.4, 0.3, (n_rows, 6))) * limit[:, None]
    X[:, 11:17] = bill.round()
    X[:, 17:23] = (rng.exponential(0.05, (n_rows, 6)) * limit[:, None]).round()
    z = (-1.6 + 0.9 * X[:, 5] + 0.25 * X[:, 6] - 0.6 * np.log(limit / 1e5)
         + 0.4 * (bill[:, 0] / limit) - 3.0 * X[:, 17] / limit)
    y = (rng.uniform(size=n_rows) < 1 / (1 + np.exp(-z))).astype(int)
    return Dataset(X, UCI_COLUMNS, y, "default payment next month")


def leaf(v, c):
    return TreeNode(cover=float(c), leaf_value=float(v))


def split(f, t, left, right):
    return TreeNode(cover=left.cover + right.cover, split_feature=f, threshold=t, left=left, right=right)


def fever_cough_models():
    """Two trees over (fever, cough); the second leans harder on cough."""
    a = split(0, 0.5, split(1, 0.5, leaf(0, 25), leaf(0, 25)), split(1, 0.5, leaf(0, 25), leaf(80, 25)))
    b = split(1, 0.5, split(0, 0.5, leaf(0, 25), leaf(0, 25)), split(0, 0.5, leaf(10, 25), leaf(90, 25)))
    names = ("fever", "cough")
    return (ensemble([DecisionTree.from_node(a, feature_count=2)], 2, names=names),
            ensemble([DecisionTree.from_node(b, feature_count=2)], 2, names=names))
