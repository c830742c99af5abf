"""Random-forest analysis of categorical candidate records.

Trees, bagging, variable importance, importance-based pruning and the
accept/reject selection trees built from them.
"""

from .cart import best_split, gini_impurity, grow_tree, predict_tree
from .dataset import (Dataset, FeatureSchema, SynthSpec, categorize_score, default_schema,
                      generate_synthetic, parse_csv, stratified_folds, to_csv)
from .forest import (FORMAT_VERSION, ForestParams, RandomForestModel, bootstrap_sample,
                     model_from_json, model_to_json, oob_error, predict_forest, train_forest)
from .importance import (importance_report, mean_decrease_accuracy, mean_decrease_gini,
                         percent_importance, prune_features)
from .metrics import class_rates, confusion_matrix, cross_validate, roc_auc
from .selection import (AcceptPolicy, derive_selection_tree, figure3_tree, parse_rules,
                        screen_candidate, serialize_rules)

__version__ = "0.1.0"

__all__ = [
    "AcceptPolicy", "Dataset", "FORMAT_VERSION", "FeatureSchema", "ForestParams",
    "RandomForestModel", "SynthSpec", "best_split", "bootstrap_sample", "categorize_score",
    "class_rates", "confusion_matrix", "cross_validate", "default_schema",
    "derive_selection_tree", "figure3_tree", "generate_synthetic", "gini_impurity",
    "grow_tree", "importance_report", "mean_decrease_accuracy", "mean_decrease_gini",
    "model_from_json", "model_to_json", "oob_error", "parse_csv", "parse_rules",
    "percent_importance", "predict_forest", "predict_tree", "prune_features", "roc_auc",
    "screen_candidate", "serialize_rules", "stratified_folds", "to_csv", "train_forest",
]
