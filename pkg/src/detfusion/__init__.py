"""Weighted boxes fusion of detector ensembles with DE-optimized model weights."""
from .boxes import (BoundingBox, Dataset, Detection, GroundTruthBox, ModelRun, box_area, iou,
                    iou_matrix, validate_dataset)
from .de import (ConvergenceHistory, DeConfig, Individual, Population, adapt_scale_factor,
                 crossover, evaluate_fitness, initialize_population, mutate, run_deihdl, select)
from .metrics import EvalReport, PrCurve, average_precision, evaluate, match_detections
from .wbf import FusedBox, WbfConfig, fuse_cluster, rescale_confidence, resolve_category, weighted_boxes_fusion

__all__ = [
    "BoundingBox", "Dataset", "Detection", "GroundTruthBox", "ModelRun", "box_area", "iou",
    "iou_matrix", "validate_dataset", "ConvergenceHistory", "DeConfig", "Individual", "Population",
    "adapt_scale_factor", "crossover", "evaluate_fitness", "initialize_population", "mutate",
    "run_deihdl", "select", "EvalReport", "PrCurve", "average_precision", "evaluate",
    "match_detections", "FusedBox", "WbfConfig", "fuse_cluster", "rescale_confidence",
    "resolve_category", "weighted_boxes_fusion",
]
