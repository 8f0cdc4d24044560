"""Synthetic ground truth and noisy detectors, a stand-in for real model outputs."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boxes import BoundingBox, Dataset, Detection, GroundTruthBox, ModelRun, iou
from .de import stream


@dataclass(frozen=True)
class NoiseProfile:
    name: str
    sigma: float = 0.0           # coordinate jitter std, as a fraction of box width/height
    miss_rate: float = 0.0
    fp_rate: float = 0.0         # chance that a gt box spawns one extra random box
    confidence: float = 0.9      # confidence of a perfectly localized detection
    confidence_noise: float = 0.05
    fp_confidence: float = 0.5   # false-positive confidences are U(0.01, fp_confidence)
    class_flip_rate: float = 0.0

    def __post_init__(self) -> None:
        for name in ("miss_rate", "fp_rate", "class_flip_rate", "confidence", "fp_confidence"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.sigma < 0 or self.confidence_noise < 0:
            raise ValueError("sigma and confidence_noise must be non-negative")


DEFAULT_MODELS = (
    NoiseProfile("model_a", sigma=0.05, miss_rate=0.20, fp_rate=0.20),
    NoiseProfile("model_b", sigma=0.08, miss_rate=0.10, fp_rate=0.30, confidence=0.85),
    NoiseProfile("model_c", sigma=0.04, miss_rate=0.30, fp_rate=0.10, confidence_noise=0.1),
)


@dataclass(frozen=True)
class SyntheticSpec:
    n_images: int = 100
    n_categories: int = 3
    boxes_per_image: tuple[int, int] = (1, 4)
    image_size: float = 640.0
    box_size: tuple[float, float] = (32.0, 128.0)
    max_gt_overlap: float = 0.3
    models: tuple[NoiseProfile, ...] = field(default=DEFAULT_MODELS)
    seed: int = 0


def planted_spec(n_images: int = 200, seed: int = 0) -> SyntheticSpec:
    """One exact detector and two that are mostly noise."""
    noisy = dict(sigma=0.6, miss_rate=0.5, fp_rate=1.0, confidence=0.9,
                 confidence_noise=0.1, fp_confidence=0.9)
    return SyntheticSpec(
        n_images=n_images,
        models=(
            NoiseProfile("clean", sigma=0.0, miss_rate=0.0, fp_rate=0.0),
            NoiseProfile("noise_a", **noisy),
            NoiseProfile("noise_b", class_flip_rate=0.5, **noisy),
        ),
        seed=seed,
    )


def _random_box(rng: np.random.Generator, spec: SyntheticSpec) -> BoundingBox:
    lo, hi = spec.box_size
    w, h = rng.uniform(lo, hi, size=2)
    x = rng.uniform(0.0, spec.image_size - w)
    y = rng.uniform(0.0, spec.image_size - h)
    return BoundingBox(float(x), float(y), float(x + w), float(y + h))


def generate_ground_truth(spec: SyntheticSpec) -> Dataset:
    rng = stream(spec.seed, 1)
    cats = set(range(1, spec.n_categories + 1))
    images = set(range(1, spec.n_images + 1))
    gt: dict[int, list[GroundTruthBox]] = {}
    for image in sorted(images):
        k = int(rng.integers(spec.boxes_per_image[0], spec.boxes_per_image[1] + 1))
        boxes: list[GroundTruthBox] = []
        for _ in range(k):
            for _attempt in range(50):
                b = _random_box(rng, spec)
                if all(iou(b, o.box) <= spec.max_gt_overlap for o in boxes):
                    break
            else:
                continue
            boxes.append(GroundTruthBox(b, int(rng.integers(1, spec.n_categories + 1)), image))
        if boxes:
            gt[image] = boxes
    return Dataset(images, gt, cats, "validation", {c: f"class_{c}" for c in cats},
                   {i: (spec.image_size, spec.image_size) for i in images})


def simulate_model(ds: Dataset, profile: NoiseProfile, spec: SyntheticSpec, index: int) -> ModelRun:
    """Jitter, drop and pad the ground truth according to ``profile``.

    Every gt box consumes the same number of random draws whatever the
    profile, so changing one rate does not reshuffle the rest of the run.
    """
    rng = stream(spec.seed, 2, index)
    size = spec.image_size
    cats = sorted(ds.categories)
    dets: list[Detection] = []
    for image in sorted(ds.images):
        for g in ds.gt_for(image):
            miss, flip, spawn_fp = rng.random(3)
            jitter = rng.normal(size=4)
            flip_to = int(rng.integers(len(cats)))
            fp_box = _random_box(rng, spec)
            fp_cat = cats[int(rng.integers(len(cats)))]
            fp_conf = rng.uniform(0.01, max(0.01, profile.fp_confidence))
            conf_eps = rng.normal()

            if miss >= profile.miss_rate:
                b = g.box
                w, h = b.x_max - b.x_min, b.y_max - b.y_min
                if profile.sigma > 0:
                    dx0, dy0, dx1, dy1 = profile.sigma * jitter * (w, h, w, h)
                    xs = sorted((min(size, max(0.0, b.x_min + dx0)), min(size, max(0.0, b.x_max + dx1))))
                    ys = sorted((min(size, max(0.0, b.y_min + dy0)), min(size, max(0.0, b.y_max + dy1))))
                    box = BoundingBox(float(xs[0]), float(ys[0]), float(xs[1]), float(ys[1]))
                else:
                    box = b
                cat = g.category
                if flip < profile.class_flip_rate and len(cats) > 1:
                    others = [c for c in cats if c != g.category]
                    cat = others[flip_to % len(others)]
                conf = profile.confidence * iou(box, b) + profile.confidence_noise * conf_eps
                dets.append(Detection(box, cat, float(np.clip(conf, 0.01, 1.0)), image))
            if spawn_fp < profile.fp_rate:
                dets.append(Detection(fp_box, fp_cat, float(fp_conf), image))
    return ModelRun.from_detections(profile.name, dets)


def generate(spec: SyntheticSpec) -> tuple[Dataset, list[ModelRun]]:
    ds = generate_ground_truth(spec)
    runs = [simulate_model(ds, p, spec, k) for k, p in enumerate(spec.models)]
    return ds, runs
