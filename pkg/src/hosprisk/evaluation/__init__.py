"""Splitting, cross-validated grid search, metrics, correlation and importance."""

from .correlation import ConstantColumnWarning, correlation_long, pearson_matrix
from .importance import (
    EmptyBin,
    ImportanceTable,
    NoHighRiskRows,
    SubgroupBin,
    counterfactual_effect,
    feature_drops,
    impurity_importance,
    permutation_importance,
    subgroup_importance,
)
from .metrics import ConfusionMatrix, LengthMismatch, MetricSet, accuracy, compute_metrics, confusion_matrix
from .search import CandidateResult, GridPointError, GridSearchResult, evaluate_point, expand_grid, grid_search
from .split import DegenerateClass, SplitPlan, largest_remainder, stratified_kfold, stratified_split
