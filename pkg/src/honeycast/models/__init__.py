from .ensemble import (
    EnsembleModel,
    ForestParams,
    GbtParams,
    fit_gradient_boosting,
    fit_linear_ols,
    fit_model,
    fit_random_forest,
    fit_single_tree,
    params_from_dict,
)
from .tree import Split, Tree, TreeNode, TreeParams, best_split, fit_regression_tree, predict_tree

__all__ = [
    "EnsembleModel", "ForestParams", "GbtParams", "Split", "Tree", "TreeNode", "TreeParams",
    "best_split", "fit_gradient_boosting", "fit_linear_ols", "fit_model", "fit_random_forest",
    "fit_regression_tree", "fit_single_tree", "params_from_dict", "predict_tree",
]
