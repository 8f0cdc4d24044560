"""Boxes, detections, datasets and the IoU primitives everything else uses.

Boxes are corner form ``(x_min, y_min, x_max, y_max)`` in 64-bit floats.
Types do not validate on construction so that malformed inputs can be
reported by :func:`validate_dataset` instead of blowing up mid-pipeline.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

CategoryId = int
ImageId = int


@dataclass(frozen=True, slots=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @classmethod
    def from_xywh(cls, x: float, y: float, w: float, h: float) -> "BoundingBox":
        return cls(float(x), float(y), float(x) + float(w), float(y) + float(h))

    def to_xywh(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max - self.x_min, self.y_max - self.y_min)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in self.as_tuple())

    def is_valid(self) -> bool:
        return self.is_finite() and self.x_min <= self.x_max and self.y_min <= self.y_max


@dataclass(frozen=True, slots=True)
class Detection:
    box: BoundingBox
    category: CategoryId
    confidence: float
    image: ImageId


@dataclass(frozen=True, slots=True)
class GroundTruthBox:
    box: BoundingBox
    category: CategoryId
    image: ImageId


@dataclass
class ModelRun:
    """One detector's detections over a dataset, keyed by image id."""

    model_name: str
    detections: dict[ImageId, list[Detection]] = field(default_factory=dict)

    @classmethod
    def from_detections(cls, model_name: str, dets: Iterable[Detection]) -> "ModelRun":
        by_image: dict[ImageId, list[Detection]] = {}
        for d in dets:
            by_image.setdefault(d.image, []).append(d)
        return cls(model_name, by_image)

    def for_image(self, image: ImageId) -> list[Detection]:
        return self.detections.get(image, [])

    def all_detections(self) -> list[Detection]:
        return [d for image in sorted(self.detections) for d in self.detections[image]]

    def __len__(self) -> int:
        return sum(len(v) for v in self.detections.values())


@dataclass
class Dataset:
    images: set[ImageId]
    ground_truth: dict[ImageId, list[GroundTruthBox]]
    categories: set[CategoryId]
    split: str = "validation"
    category_names: dict[CategoryId, str] = field(default_factory=dict)
    image_sizes: dict[ImageId, tuple[float, float]] = field(default_factory=dict)

    def gt_for(self, image: ImageId) -> list[GroundTruthBox]:
        return self.ground_truth.get(image, [])

    def num_boxes(self) -> int:
        return sum(len(v) for v in self.ground_truth.values())

    def gt_categories(self) -> set[CategoryId]:
        """Categories with at least one ground-truth instance in this dataset."""
        return {g.category for boxes in self.ground_truth.values() for g in boxes}

    def subset(self, images: Iterable[ImageId], split: str) -> "Dataset":
        keep = set(images)
        return Dataset(
            images=keep & self.images,
            ground_truth={i: list(v) for i, v in self.ground_truth.items() if i in keep},
            categories=set(self.categories),
            split=split,
            category_names=dict(self.category_names),
            image_sizes={i: s for i, s in self.image_sizes.items() if i in keep},
        )


def box_area(b: BoundingBox) -> float:
    return (b.x_max - b.x_min) * (b.y_max - b.y_min)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; 0 when the union has zero area."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = box_area(a) + box_area(b) - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, inter / union)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between ``(n, 4)`` and ``(m, 4)`` corner-form arrays."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)
    return np.minimum(out, 1.0)


@dataclass(frozen=True)
class Finding:
    kind: str
    count: int
    examples: tuple[str, ...] = ()

    def __str__(self) -> str:
        ex = f" (e.g. {', '.join(self.examples)})" if self.examples else ""
        return f"{self.kind}: {self.count}{ex}"


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.findings)

    def __len__(self) -> int:
        return len(self.findings)

    def count(self, kind: str) -> int:
        return sum(f.count for f in self.findings if f.kind == kind)

    def __str__(self) -> str:
        return "\n".join(str(f) for f in self.findings) or "clean"


UNKNOWN_IMAGE = "unknown image"
CONFIDENCE_RANGE = "confidence out of range"
INVERTED_BOX = "inverted box"
NON_FINITE = "non-finite coordinate"
KEY_MISMATCH = "image key mismatch"
UNKNOWN_CATEGORY = "unknown category"


def validate_dataset(ds: Dataset, runs: Sequence[ModelRun] = ()) -> ValidationReport:
    """Collect every invariant violation in ``ds`` and ``runs``; never raises."""
    counts: Counter[str] = Counter()
    examples: dict[str, list[str]] = {}

    def note(kind: str, where: str) -> None:
        counts[kind] += 1
        ex = examples.setdefault(kind, [])
        if len(ex) < 3:
            ex.append(where)

    def check_box(box: BoundingBox, where: str) -> None:
        if not box.is_finite():
            note(NON_FINITE, where)
        elif box.x_min > box.x_max or box.y_min > box.y_max:
            note(INVERTED_BOX, where)

    for image, gts in ds.ground_truth.items():
        for k, g in enumerate(gts):
            where = f"gt image {image} #{k}"
            if image not in ds.images:
                note(UNKNOWN_IMAGE, where)
            if g.image != image:
                note(KEY_MISMATCH, where)
            if g.category not in ds.categories:
                note(UNKNOWN_CATEGORY, where)
            check_box(g.box, where)

    for run in runs:
        for image, dets in run.detections.items():
            for k, d in enumerate(dets):
                where = f"{run.model_name} image {image} #{k}"
                if image not in ds.images:
                    note(UNKNOWN_IMAGE, where)
                if d.image != image:
                    note(KEY_MISMATCH, where)
                if not (0.0 <= d.confidence <= 1.0):
                    note(CONFIDENCE_RANGE, where)
                check_box(d.box, where)

    return ValidationReport([Finding(k, counts[k], tuple(examples[k])) for k in counts])


def boxes_to_array(boxes: Iterable[BoundingBox]) -> np.ndarray:
    arr = np.array([b.as_tuple() for b in boxes], dtype=np.float64)
    return arr.reshape(-1, 4)


def group_by_category(items: Iterable, key=lambda x: x.category) -> Mapping[CategoryId, list]:
    out: dict[CategoryId, list] = {}
    for it in items:
        out.setdefault(key(it), []).append(it)
    return out
