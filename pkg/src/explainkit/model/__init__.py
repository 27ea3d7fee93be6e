"""Decision trees, boosted ensembles and the scoring contract."""

from .gbm import (GbmConfig, GbmModel, auc, fit_gbm, log_loss, monotone_from_correlation,
                  predict)
from .tree import LEAF, DecisionTree, TreeNode, fit_tree, grow_tree, predict_tree

__all__ = [
    "LEAF", "DecisionTree", "TreeNode", "fit_tree", "grow_tree", "predict_tree",
    "GbmConfig", "GbmModel", "auc", "fit_gbm", "log_loss", "monotone_from_correlation", "predict",
]
