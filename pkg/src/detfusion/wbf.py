"""Weighted boxes fusion with per-model weights.

Boxes from all models are scored by ``confidence * weight``, sorted, and
greedily clustered: each box joins the first cluster whose current fused
box overlaps it by more than ``iou_match_threshold``, else it starts a new
cluster.  A cluster's fused box is the score-weighted mean of its members;
its category is the one with the largest summed score.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

from .boxes import BoundingBox, CategoryId, Detection, iou

RescaleMode = Literal["min", "t_over_n", "none"]
RESCALE_MODES = ("min", "t_over_n", "none")


@dataclass(frozen=True)
class WbfConfig:
    iou_match_threshold: float = 0.55
    skip_score_threshold: float = 0.0
    category_agnostic_clustering: bool = True
    # "min" -> min(T, N) / N, "t_over_n" -> T / N clamped to 1, "none" -> identity
    confidence_rescale: RescaleMode = "min"

    def __post_init__(self) -> None:
        if not 0.0 < self.iou_match_threshold <= 1.0:
            raise ValueError(f"iou_match_threshold must be in (0, 1], got {self.iou_match_threshold}")
        if not 0.0 <= self.skip_score_threshold <= 1.0:
            raise ValueError(f"skip_score_threshold must be in [0, 1], got {self.skip_score_threshold}")
        if self.confidence_rescale not in RESCALE_MODES:
            raise ValueError(f"unknown confidence_rescale {self.confidence_rescale!r}")


@dataclass(frozen=True, slots=True)
class WeightedBox:
    detection: Detection
    model_index: int
    effective_score: float
    order: int = 0

    @classmethod
    def build(cls, det: Detection, model_index: int, weight: float, order: int = 0) -> "WeightedBox":
        return cls(det, model_index, det.confidence * weight, order)


@dataclass(frozen=True, slots=True)
class FusedBox:
    box: BoundingBox
    category: CategoryId
    confidence: float
    member_count: int


def resolve_category(members: Sequence[WeightedBox]) -> tuple[CategoryId, dict[CategoryId, float]]:
    """Arg-max of summed effective score per category; ties go to the smallest id."""
    scores: dict[CategoryId, float] = {}
    for m in members:
        cat = m.detection.category
        scores[cat] = scores.get(cat, 0.0) + m.effective_score
    best = min(scores, key=lambda c: (-scores[c], c))
    return best, scores


def fuse_cluster(members: Sequence[WeightedBox]) -> FusedBox:
    """Score-weighted mean box; confidence is the mean effective score (pre-rescale)."""
    if not members:
        raise ValueError("cannot fuse an empty cluster")
    total = 0.0
    sx0 = sy0 = sx1 = sy1 = 0.0
    for m in members:
        s = m.effective_score
        if s < 0:
            raise ValueError("effective scores must be non-negative")
        b = m.detection.box
        total += s
        sx0 += s * b.x_min
        sy0 += s * b.y_min
        sx1 += s * b.x_max
        sy1 += s * b.y_max
    if total <= 0.0:
        raise ValueError("cluster has all-zero effective scores")
    category, _ = resolve_category(members)
    t = len(members)
    if t == 1:
        box = members[0].detection.box  # s * x / s is not always x in floating point
    else:
        box = BoundingBox(sx0 / total, sy0 / total, sx1 / total, sy1 / total)
    return FusedBox(box, category, min(1.0, max(0.0, total / t)), t)


def rescale_confidence(pre_conf: float, t: int, n: int, mode: RescaleMode = "min") -> float:
    if t < 1 or n < 1:
        raise ValueError("member count and model count must be positive")
    if mode == "min":
        return pre_conf * min(t, n) / n
    if mode == "t_over_n":
        return min(1.0, pre_conf * t / n)
    if mode == "none":
        return pre_conf
    raise ValueError(f"unknown rescale mode {mode!r}")


@dataclass
class Cluster:
    """Members plus running sums so the fused box is refreshed in O(1) per insertion."""

    members: list[WeightedBox] = field(default_factory=list)
    _sums: list[float] = field(default_factory=lambda: [0.0] * 5)
    box: BoundingBox | None = None

    @property
    def category(self) -> CategoryId:
        return self.members[0].detection.category

    def add(self, wb: WeightedBox) -> None:
        self.members.append(wb)
        s = wb.effective_score
        b = wb.detection.box
        sums = self._sums
        sums[0] += s
        sums[1] += s * b.x_min
        sums[2] += s * b.y_min
        sums[3] += s * b.x_max
        sums[4] += s * b.y_max
        tot = sums[0]
        if len(self.members) == 1:
            self.box = b
            return
        self.box = BoundingBox(sums[1] / tot, sums[2] / tot, sums[3] / tot, sums[4] / tot)

    @property
    def fused(self) -> FusedBox:
        return fuse_cluster(self.members)


def normalized_weights(weights: Sequence[float]) -> list[float]:
    """Weights divided by their maximum, so only their ratios matter."""
    ws = [float(w) for w in weights]
    if any(w < 0 for w in ws):
        raise ValueError("weights must be non-negative")
    top = max(ws, default=0.0)
    if top <= 0.0:
        raise ValueError("at least one weight must be positive")
    return [w / top for w in ws]


def weighted_input(
    per_image_boxes: Sequence[Sequence[Detection]],
    weights: Sequence[float],
    cfg: WbfConfig,
) -> list[WeightedBox]:
    """Score, filter and order all boxes for one image (highest score first)."""
    if len(per_image_boxes) != len(weights):
        raise ValueError(
            f"got {len(per_image_boxes)} box lists but {len(weights)} weights"
        )
    ws = normalized_weights(weights)
    out: list[WeightedBox] = []
    for m, (dets, w) in enumerate(zip(per_image_boxes, ws)):
        if w == 0.0:
            continue
        for k, d in enumerate(dets):
            if d.confidence < cfg.skip_score_threshold:
                continue
            wb = WeightedBox.build(d, m, w, k)
            # zero-score boxes would change T without moving the fused box
            if wb.effective_score > 0.0:
                out.append(wb)
    out.sort(key=lambda wb: (-wb.effective_score, wb.model_index, wb.order))
    return out


def cluster_boxes(ordered: Sequence[WeightedBox], cfg: WbfConfig) -> list[Cluster]:
    thr = cfg.iou_match_threshold
    strict = not cfg.category_agnostic_clustering
    clusters: list[Cluster] = []
    for wb in ordered:
        box = wb.detection.box
        for c in clusters:
            if strict and c.category != wb.detection.category:
                continue
            if iou(c.box, box) > thr:
                c.add(wb)
                break
        else:
            c = Cluster()
            c.add(wb)
            clusters.append(c)
    return clusters


def weighted_boxes_fusion(
    per_image_boxes: Sequence[Sequence[Detection]],
    weights: Sequence[float],
    cfg: WbfConfig | None = None,
) -> list[FusedBox]:
    """Fuse one image's detections from ``N`` models into a list of fused boxes.

    ``per_image_boxes[m]`` holds model ``m``'s detections for the image and
    ``weights[m]`` its non-negative weight.  Weights are rescaled by their
    maximum, so multiplying them all by a constant changes nothing.  Boxes
    from zero-weight models are ignored.  Output order is cluster creation
    order.
    """
    cfg = cfg or WbfConfig()
    n = len(weights)
    ordered = weighted_input(per_image_boxes, weights, cfg)
    out = []
    for c in cluster_boxes(ordered, cfg):
        f = c.fused
        conf = rescale_confidence(f.confidence, f.member_count, n, cfg.confidence_rescale)
        out.append(FusedBox(f.box, f.category, conf, f.member_count))
    return out
