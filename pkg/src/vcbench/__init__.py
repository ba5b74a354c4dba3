"""Video copy detection and localization benchmark toolkit."""

__version__ = "0.1.0"

from .core import (
    DescriptorSet,
    DetectionPrediction,
    GroundTruth,
    GtBox,
    LocalizationPrediction,
    SegmentBox,
    TransformTag,
    VideoId,
    VideoKind,
)
from .errors import DimError, FormatError, ValidationError, VcbenchError
from .localize import SimilarityMatrix, TNConfig, localize_candidates, similarity_matrix, temporal_network_localize
from .metrics import (
    IntervalUnion,
    PRCurve,
    detection_uap,
    drop_distractor_predictions,
    evaluate_subset,
    hard_negative_comparison,
    localization_uap,
    mean_ap,
)
from .search import (
    FrameMatch,
    ScoreNormalizer,
    SearchConfig,
    apply_normalizer,
    detection_scores,
    fit_normalizer,
    global_topk_pairs,
    l2_normalize,
)
from .simulate import BenchmarkInstance, SimConfig, generate, run_baseline

__all__ = [
    "BenchmarkInstance",
    "DescriptorSet",
    "DetectionPrediction",
    "DimError",
    "FormatError",
    "FrameMatch",
    "GroundTruth",
    "GtBox",
    "IntervalUnion",
    "LocalizationPrediction",
    "PRCurve",
    "ScoreNormalizer",
    "SearchConfig",
    "SegmentBox",
    "SimConfig",
    "SimilarityMatrix",
    "TNConfig",
    "TransformTag",
    "ValidationError",
    "VcbenchError",
    "VideoId",
    "VideoKind",
    "apply_normalizer",
    "detection_scores",
    "detection_uap",
    "drop_distractor_predictions",
    "evaluate_subset",
    "fit_normalizer",
    "generate",
    "global_topk_pairs",
    "hard_negative_comparison",
    "l2_normalize",
    "localization_uap",
    "localize_candidates",
    "mean_ap",
    "run_baseline",
    "similarity_matrix",
    "temporal_network_localize",
]
