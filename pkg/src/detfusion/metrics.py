"""Detection evaluation: greedy TP/FP matching, PR curves, AP and mAP.

Matching follows the usual COCO/VOC protocol: per category, detections are
ranked by confidence across all images, each one claims the unmatched
ground-truth box with the highest IoU at or above the threshold.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Mapping, Sequence

import numpy as np

from .boxes import CategoryId, Dataset, ImageId, boxes_to_array, iou_matrix

Scheme = Literal["101", "all"]
COCO_THRESHOLDS: tuple[float, ...] = tuple(round(0.5 + 0.05 * k, 2) for k in range(10))
RECALL_GRID = np.array([k / 100 for k in range(101)])


@dataclass
class MatchOutcome:
    is_tp: list[bool]            # per detection, input order
    matched_gt: list[int]        # gt index per detection, -1 for FP
    gt_matched: list[bool]
    tp: int
    fp: int
    fn: int


@dataclass
class PrCurve:
    recall: np.ndarray
    precision: np.ndarray
    scores: np.ndarray = field(default_factory=lambda: np.zeros(0))
    num_gt: int = 0

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.recall.tolist(), self.precision.tolist()))


def greedy_match(ious: np.ndarray, thresholds: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Match detections (rows, already in rank order) to ground truth (columns).

    Returns ``(tp, gt_index)`` of shape ``(len(thresholds), n_det)``; every
    threshold is resolved in one pass.  Ties in IoU go to the lowest gt index.
    """
    thr = np.asarray(thresholds, dtype=np.float64)
    n_t = len(thr)
    n_det, n_gt = ious.shape
    tp = np.zeros((n_t, n_det), dtype=bool)
    gt_index = np.full((n_t, n_det), -1, dtype=np.int64)
    if n_gt == 0 or n_det == 0:
        return tp, gt_index
    rows = np.arange(n_t)
    taken = np.zeros((n_t, n_gt), dtype=bool)
    for d in range(n_det):
        row = ious[d]
        ok = (row[None, :] >= thr[:, None]) & ~taken
        if not ok.any():
            continue
        masked = np.where(ok, row[None, :], -1.0)
        j = masked.argmax(axis=1)
        hit = ok[rows, j]
        tp[hit, d] = True
        gt_index[hit, d] = j[hit]
        taken[rows[hit], j[hit]] = True
    return tp, gt_index


def _rank(confidences: np.ndarray) -> np.ndarray:
    return np.argsort(-np.asarray(confidences, dtype=np.float64), kind="stable")


def match_detections(dets: Sequence, gts: Sequence, iou_threshold: float) -> MatchOutcome:
    """Greedy matching for one image and one category."""
    order = _rank([d.confidence for d in dets])
    d_arr = boxes_to_array(dets[i].box for i in order)
    g_arr = boxes_to_array(g.box for g in gts)
    tp, gi = greedy_match(iou_matrix(d_arr, g_arr), [iou_threshold])
    is_tp = [False] * len(dets)
    matched = [-1] * len(dets)
    for rank, i in enumerate(order):
        is_tp[i] = bool(tp[0, rank])
        matched[i] = int(gi[0, rank])
    gt_matched = [False] * len(gts)
    for j in matched:
        if j >= 0:
            gt_matched[j] = True
    n_tp = sum(is_tp)
    return MatchOutcome(is_tp, matched, gt_matched, n_tp, len(dets) - n_tp, len(gts) - n_tp)


def pr_curve(scores: np.ndarray, tp: np.ndarray, num_gt: int) -> PrCurve:
    """PR points in descending-score order; ``tp`` aligned with ``scores``."""
    order = _rank(scores)
    hits = np.asarray(tp, dtype=bool)[order]
    ctp = np.cumsum(hits)
    cfp = np.cumsum(~hits)
    recall = ctp / num_gt if num_gt > 0 else np.zeros(len(ctp))
    with np.errstate(invalid="ignore"):
        precision = ctp / np.maximum(ctp + cfp, 1)
    return PrCurve(recall.astype(np.float64), precision.astype(np.float64),
                   np.asarray(scores, dtype=np.float64)[order], num_gt)


def average_precision(curve: PrCurve, scheme: Scheme = "101") -> float:
    """Area under the monotone precision envelope.

    ``"101"`` samples the envelope at recall 0, 0.01, ..., 1 (COCO);
    ``"all"`` integrates it exactly over every recall step.
    """
    r, p = curve.recall, curve.precision
    if len(r) == 0:
        return 0.0
    envelope = np.maximum.accumulate(p[::-1])[::-1]
    if scheme == "101":
        idx = np.searchsorted(r, RECALL_GRID, side="left")
        valid = idx < len(r)
        return float(envelope[idx[valid]].sum() / len(RECALL_GRID))
    if scheme == "all":
        steps = np.diff(np.concatenate([[0.0], r]))
        return float(np.sum(steps * envelope))
    raise ValueError(f"unknown AP scheme {scheme!r}")


class GroundTruthIndex:
    """Per-(image, category) ground-truth arrays, built once per dataset."""

    def __init__(self, ds: Dataset):
        self.images = sorted(ds.images)
        self.categories = sorted(ds.gt_categories())
        self.num_gt: dict[CategoryId, int] = {c: 0 for c in self.categories}
        self.boxes: dict[tuple[ImageId, CategoryId], np.ndarray] = {}
        for image in self.images:
            by_cat: dict[CategoryId, list] = {}
            for g in ds.gt_for(image):
                by_cat.setdefault(g.category, []).append(g.box)
            for c, bs in by_cat.items():
                self.boxes[(image, c)] = boxes_to_array(bs)
                self.num_gt[c] += len(bs)

    def get(self, image: ImageId, category: CategoryId) -> np.ndarray:
        arr = self.boxes.get((image, category))
        return arr if arr is not None else np.zeros((0, 4))


@dataclass
class EvalReport:
    thresholds: tuple[float, ...]
    categories: tuple[CategoryId, ...]
    ap: dict[CategoryId, list[float]]           # per category, one AP per threshold
    map_per_threshold: list[float]
    curves: dict[tuple[CategoryId, float], PrCurve] = field(default_factory=dict)
    scheme: str = "101"

    def map_at(self, threshold: float) -> float:
        for k, t in enumerate(self.thresholds):
            if abs(t - threshold) < 1e-9:
                return self.map_per_threshold[k]
        raise KeyError(f"threshold {threshold} was not evaluated")

    @property
    def map50(self) -> float:
        return self.map_at(0.5)

    @property
    def map50_95(self) -> float:
        """Mean mAP over the evaluated thresholds (0.50:0.05:0.95 by default)."""
        return float(np.mean(self.map_per_threshold)) if self.map_per_threshold else 0.0

    def to_dict(self) -> dict:
        per_cat = {}
        for c in self.categories:
            aps = self.ap[c]
            entry = {"ap": float(np.mean(aps)), "ap_per_threshold": [float(a) for a in aps]}
            if 0.5 in self.thresholds:
                entry["ap50"] = float(aps[self.thresholds.index(0.5)])
            per_cat[str(c)] = entry
        out = {
            "map50_95": self.map50_95,
            "map50_95_pct": 100.0 * self.map50_95,
            "per_category_ap": per_cat,
            "thresholds": list(self.thresholds),
            "scheme": self.scheme,
        }
        if 0.5 in self.thresholds:
            out = {"map50": self.map50, "map50_pct": 100.0 * self.map50, **out}
        return out


def evaluate(
    detections: Mapping[ImageId, Sequence],
    ds: Dataset,
    thresholds: Sequence[float] = COCO_THRESHOLDS,
    scheme: Scheme = "101",
    max_dets: int | None = None,
    keep_curves: bool = True,
    gt_index: GroundTruthIndex | None = None,
) -> EvalReport:
    """Evaluate detections (anything with ``box``, ``category``, ``confidence``).

    Only images in ``ds.images`` are scored.  mAP averages over categories
    that have ground truth; detections of other categories are ignored.
    ``max_dets`` caps detections per image and category, highest first.
    """
    thresholds = tuple(float(t) for t in thresholds)
    if not thresholds or any(not 0.0 < t <= 1.0 for t in thresholds):
        raise ValueError("thresholds must be non-empty and within (0, 1]")
    gi = gt_index or GroundTruthIndex(ds)
    cats = gi.categories
    cat_set = set(cats)
    scores: dict[CategoryId, list[np.ndarray]] = {c: [] for c in cats}
    hits: dict[CategoryId, list[np.ndarray]] = {c: [] for c in cats}

    for image in gi.images:
        by_cat: dict[CategoryId, list] = {}
        for d in detections.get(image, ()):
            if d.category in cat_set:
                by_cat.setdefault(d.category, []).append(d)
        for c, dets in by_cat.items():
            conf = np.array([d.confidence for d in dets], dtype=np.float64)
            order = _rank(conf)
            if max_dets is not None:
                order = order[:max_dets]
            d_arr = boxes_to_array(dets[i].box for i in order)
            tp, _ = greedy_match(iou_matrix(d_arr, gi.get(image, c)), thresholds)
            scores[c].append(conf[order])
            hits[c].append(tp)

    ap: dict[CategoryId, list[float]] = {}
    curves: dict[tuple[CategoryId, float], PrCurve] = {}
    for c in cats:
        s = np.concatenate(scores[c]) if scores[c] else np.zeros(0)
        h = np.concatenate(hits[c], axis=1) if hits[c] else np.zeros((len(thresholds), 0), bool)
        ap[c] = []
        for k, t in enumerate(thresholds):
            curve = pr_curve(s, h[k], gi.num_gt[c])
            ap[c].append(average_precision(curve, scheme))
            if keep_curves:
                curves[(c, t)] = curve

    maps = [float(np.mean([ap[c][k] for c in cats])) if cats else 0.0 for k in range(len(thresholds))]
    return EvalReport(thresholds, tuple(cats), ap, maps, curves, scheme)
