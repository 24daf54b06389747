from .lda import LdaResult, export_lda_csv, lda_project, scatter_matrices
from .metrics import ConfusionCounts, PRCurve, UndefinedMetricError, prc_and_ap
from .protocols import (
    TARGETED,
    KeywordClassifier,
    binary_eval,
    census_matrix,
    closed_world_eval,
    cross_platform_eval,
    fit_binary,
    fit_keyword_model,
    multiclass_counts,
    multiclass_eval,
    multilevel_eval,
    page_vs_query_eval,
    time_gap_eval,
)
from .report import UNDEFINED, EvalReport
from .splits import SplitSpec, interleaved_split

__all__ = [
    "LdaResult", "export_lda_csv", "lda_project", "scatter_matrices",
    "ConfusionCounts", "PRCurve", "UndefinedMetricError", "prc_and_ap",
    "TARGETED", "KeywordClassifier", "binary_eval", "census_matrix", "closed_world_eval",
    "cross_platform_eval", "fit_binary", "fit_keyword_model", "multiclass_counts",
    "multiclass_eval", "multilevel_eval", "page_vs_query_eval", "time_gap_eval",
    "UNDEFINED", "EvalReport", "SplitSpec", "interleaved_split",
]
