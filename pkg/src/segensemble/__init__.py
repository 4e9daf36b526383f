"""Class-wise scoring, selection and ensembling of segmentation pseudo-labels.

The pipeline: ``maskio`` loads corpora, ``metrics`` scores each
pseudo-label set per class against ground truth, ``ensemble`` picks the
best set per class and merges the winning slices into new masks,
``synth`` generates controlled test corpora, and ``report`` renders
tables and the cost model.  ``cli`` exposes it all as one executable.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .ensemble import (
    ClassRanking,
    SelectionMap,
    merge_classwise,
    merge_naive,
    rank_classes_by_instances,
    run_ensemble,
    select_best,
)
from .errors import (
    DataError,
    ManifestError,
    MaskFormatError,
    SegEnsembleError,
    UsageError,
)
from .maskio import (
    BACKGROUND,
    IGNORE,
    DatasetManifest,
    ImageRecord,
    LabelMask,
    load_manifest,
    load_mask,
    save_mask,
    validate_corpus,
)
from .metrics import (
    MODE_ACCUMULATED,
    MODE_PER_IMAGE_MEAN,
    ClassScores,
    ClassScoreTable,
    ConfusionMatrix,
    build_score_table,
    evaluate_component,
    score_components,
)
from .report import CostParams, CostReport, cost_estimate
from .synth import DegradationProfile, Operation, SynthConfig, generate_corpus

__all__ = [
    "BACKGROUND",
    "IGNORE",
    "MODE_ACCUMULATED",
    "MODE_PER_IMAGE_MEAN",
    "ClassRanking",
    "ClassScoreTable",
    "ClassScores",
    "ConfusionMatrix",
    "CostParams",
    "CostReport",
    "DataError",
    "DatasetManifest",
    "DegradationProfile",
    "ImageRecord",
    "LabelMask",
    "ManifestError",
    "MaskFormatError",
    "Operation",
    "SegEnsembleError",
    "SelectionMap",
    "SynthConfig",
    "UsageError",
    "build_score_table",
    "cost_estimate",
    "evaluate_component",
    "generate_corpus",
    "load_manifest",
    "load_mask",
    "merge_classwise",
    "merge_naive",
    "rank_classes_by_instances",
    "run_ensemble",
    "save_mask",
    "score_components",
    "select_best",
    "validate_corpus",
]
