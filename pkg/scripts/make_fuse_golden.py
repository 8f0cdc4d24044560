"""Regenerate tests/data/micro_*.json and the fused golden file.

The golden output comes from the brute-force fusion in tests/oracles.py,
not from the package, so the fuse command is checked against it.
"""
import json
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from oracles import brute_wbf  # noqa: E402

from detfusion.coco import load_detections, write_detections  # noqa: E402
from detfusion.boxes import BoundingBox, Detection  # noqa: E402

DATA = ROOT / "tests" / "data"
WEIGHTS = [1.0, 0.6, 0.3]


def make_inputs(seed=2024):
    rng = np.random.default_rng(seed)
    objects = {1: [(10, 10, 40, 50, 1), (100, 80, 60, 40, 2)], 2: [(30, 30, 80, 80, 1)],
               3: [(5, 60, 20, 20, 2), (50, 5, 35, 35, 1), (120, 120, 50, 30, 2)]}
    for m, name in enumerate("abc"):
        dets = {}
        for image, objs in objects.items():
            for x, y, w, h, cat in objs:
                if rng.random() < 0.2:
                    continue
                j = rng.normal(scale=2.5, size=4)
                box = BoundingBox(*(round(v, 3) for v in (x + j[0], y + j[1], x + w + j[2], y + h + j[3])))
                dets.setdefault(image, []).append(Detection(box, cat, round(float(rng.uniform(0.3, 1)), 4), image))
            if rng.random() < 0.5:
                box = BoundingBox(150.0, 10.0, 170.0, 30.0 + m)
                dets.setdefault(image, []).append(Detection(box, 1, round(float(rng.uniform(0.1, 0.4)), 4), image))
        write_detections(DATA / f"micro_{name}.json", dets)


def main():
    make_inputs()
    runs = [load_detections(DATA / f"micro_{n}.json") for n in "abc"]
    images = sorted(set().union(*(r.detections for r in runs)))
    records = []
    for image in images:
        for (x0, y0, x1, y1), cat, conf, _ in brute_wbf([r.for_image(image) for r in runs], WEIGHTS):
            records.append({"image_id": image, "category_id": cat,
                            "bbox": [x0, y0, x1 - x0, y1 - y0], "score": conf})
    (DATA / "micro_fused_golden.json").write_text(json.dumps({"weights": WEIGHTS, "results": records}, indent=1) + "\n")
    print(f"{len(records)} fused boxes")


if __name__ == "__main__":
    main()
