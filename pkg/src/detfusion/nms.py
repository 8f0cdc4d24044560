"""Plain per-category NMS, used only as a comparison baseline to fusion."""
from __future__ import annotations

from typing import Sequence

from .boxes import Detection, iou
from .wbf import FusedBox, WbfConfig, weighted_input


def nms(
    per_image_boxes: Sequence[Sequence[Detection]],
    weights: Sequence[float],
    iou_threshold: float = 0.5,
) -> list[FusedBox]:
    """Keep the highest weighted-score box of every overlapping group.

    Scores are ``confidence * weight / max(weights)``, the same scoring the
    fusion uses, so the two are comparable on one report.
    """
    ordered = weighted_input(per_image_boxes, weights, WbfConfig())
    kept: list[FusedBox] = []
    for wb in ordered:
        d = wb.detection
        if any(k.category == d.category and iou(k.box, d.box) > iou_threshold for k in kept):
            continue
        kept.append(FusedBox(d.box, d.category, wb.effective_score, 1))
    return kept
