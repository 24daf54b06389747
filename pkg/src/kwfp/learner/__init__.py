from .forest import (
    DegenerateLabelsError,
    Forest,
    category_importance,
    export_importance,
    load_forest,
    predict,
    predict_proba,
    rank_categories,
    save_forest,
    train_forest,
)
from .selection import SelectionResult, forward_select
from .tree import TrainConfig, Tree, entropy, gini_impurity, grow_tree, train_tree

__all__ = [
    "DegenerateLabelsError", "Forest", "category_importance", "export_importance", "load_forest",
    "predict", "predict_proba", "rank_categories", "save_forest", "train_forest",
    "SelectionResult", "forward_select",
    "TrainConfig", "Tree", "entropy", "gini_impurity", "grow_tree", "train_tree",
]
