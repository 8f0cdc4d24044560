"""COCO annotation / results JSON reading and writing."""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .boxes import BoundingBox, Dataset, Detection, GroundTruthBox, ModelRun


class IngestionError(ValueError):
    def __init__(self, path, problems: Sequence[str]):
        self.path = str(path)
        self.problems = list(problems)
        shown = "\n  ".join(self.problems[:20])
        more = f"\n  ... {len(self.problems) - 20} more" if len(self.problems) > 20 else ""
        super().__init__(f"{self.path}: {len(self.problems)} problem(s)\n  {shown}{more}")


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise IngestionError(path, [f"malformed JSON at line {e.lineno} column {e.colno}: {e.msg}"]) from e


def _bbox(raw, where: str, problems: list[str]) -> BoundingBox | None:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        problems.append(f"{where}: bbox must be [x, y, w, h]")
        return None
    try:
        x, y, w, h = (float(v) for v in raw)
    except (TypeError, ValueError):
        problems.append(f"{where}: bbox has non-numeric values")
        return None
    if not all(math.isfinite(v) for v in (x, y, w, h)):
        problems.append(f"{where}: bbox has non-finite values")
        return None
    if w < 0 or h < 0:
        problems.append(f"{where}: negative bbox size w={w} h={h}")
        return None
    return BoundingBox.from_xywh(x, y, w, h)


def load_ground_truth(path, split: str = "validation") -> Dataset:
    data = _read_json(path)
    if not isinstance(data, dict):
        raise IngestionError(path, ["top level must be an object"])
    missing = [k for k in ("images", "annotations", "categories") if k not in data]
    if missing:
        raise IngestionError(path, [f"missing required key {k!r}" for k in missing])

    problems: list[str] = []
    images: set[int] = set()
    sizes: dict[int, tuple[float, float]] = {}
    for k, im in enumerate(data["images"]):
        if "id" not in im:
            problems.append(f"images[{k}]: missing 'id'")
            continue
        images.add(int(im["id"]))
        if "width" in im and "height" in im:
            sizes[int(im["id"])] = (float(im["width"]), float(im["height"]))
    names: dict[int, str] = {}
    for k, cat in enumerate(data["categories"]):
        if "id" not in cat:
            problems.append(f"categories[{k}]: missing 'id'")
            continue
        names[int(cat["id"])] = str(cat.get("name", cat["id"]))

    gt: dict[int, list[GroundTruthBox]] = {}
    for k, ann in enumerate(data["annotations"]):
        where = f"annotations[{k}]"
        absent = [key for key in ("image_id", "category_id", "bbox") if key not in ann]
        if absent:
            problems.append(f"{where}: missing {', '.join(absent)}")
            continue
        image, cat = int(ann["image_id"]), int(ann["category_id"])
        if image not in images:
            problems.append(f"{where}: unknown image_id {image}")
            continue
        if cat not in names:
            problems.append(f"{where}: unknown category_id {cat}")
            continue
        box = _bbox(ann["bbox"], where, problems)
        if box is not None:
            gt.setdefault(image, []).append(GroundTruthBox(box, cat, image))
    if problems:
        raise IngestionError(path, problems)
    return Dataset(images, gt, set(names), split, names, sizes)


def parse_detections(records, model_name: str, source="<records>") -> ModelRun:
    if not isinstance(records, list):
        raise IngestionError(source, ["results file must be a JSON array"])
    problems: list[str] = []
    dets: list[Detection] = []
    for k, rec in enumerate(records):
        where = f"record {k}"
        absent = [key for key in ("image_id", "category_id", "bbox", "score") if key not in rec]
        if absent:
            problems.append(f"{where}: missing {', '.join(absent)}")
            continue
        try:
            score = float(rec["score"])
        except (TypeError, ValueError):
            problems.append(f"{where}: non-numeric score {rec['score']!r}")
            continue
        if not 0.0 <= score <= 1.0:
            problems.append(f"{where}: score {score} outside [0, 1]")
            continue
        box = _bbox(rec["bbox"], where, problems)
        if box is not None:
            dets.append(Detection(box, int(rec["category_id"]), score, int(rec["image_id"])))
    if problems:
        raise IngestionError(source, problems)
    return ModelRun.from_detections(model_name, dets)


def load_detections(path, model_name: str | None = None) -> ModelRun:
    return parse_detections(_read_json(path), model_name or Path(path).stem, path)


def _fmt(v: float) -> float:
    return round(float(v), 6)


def detection_records(dets: Mapping[int, Iterable]) -> list[dict]:
    """COCO result records; coordinates rounded to 6 decimals, scores kept exact."""
    out = []
    for image in sorted(dets):
        for d in dets[image]:
            b = d.box
            x0, y0, x1, y1 = (_fmt(v) for v in b.as_tuple())
            out.append({
                "image_id": int(image),
                "category_id": int(d.category),
                "bbox": [x0, y0, _fmt(x1 - x0), _fmt(y1 - y0)],
                "score": float(d.confidence),
            })
    return out


def write_detections(path, dets: Mapping[int, Iterable]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(detection_records(dets)) + "\n")
    return path


def write_ground_truth(path, ds: Dataset) -> Path:
    images = []
    for i in sorted(ds.images):
        entry = {"id": i}
        if i in ds.image_sizes:
            entry["width"], entry["height"] = ds.image_sizes[i]
        images.append(entry)
    annotations = []
    for i in sorted(ds.ground_truth):
        for g in ds.ground_truth[i]:
            x0, y0, x1, y1 = (_fmt(v) for v in g.box.as_tuple())
            annotations.append({
                "id": len(annotations) + 1,
                "image_id": i,
                "category_id": g.category,
                "bbox": [x0, y0, _fmt(x1 - x0), _fmt(y1 - y0)],
                "area": _fmt((x1 - x0) * (y1 - y0)),
                "iscrowd": 0,
            })
    categories = [{"id": c, "name": ds.category_names.get(c, str(c))} for c in sorted(ds.categories)]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"images": images, "annotations": annotations,
                                "categories": categories}) + "\n")
    return path
