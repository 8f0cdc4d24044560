import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from detfusion.boxes import BoundingBox
from detfusion.coco import IngestionError, load_detections, load_ground_truth, parse_detections, write_detections
from detfusion.wbf import FusedBox


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return p


MINIMAL = {"images": [{"id": 7, "width": 100, "height": 80}],
           "annotations": [{"id": 1, "image_id": 7, "category_id": 3, "bbox": [10, 10, 20, 30]}],
           "categories": [{"id": 3, "name": "carrot"}]}


def test_minimal_ground_truth(tmp_path):
    ds = load_ground_truth(write(tmp_path, "gt.json", MINIMAL))
    assert ds.images == {7} and ds.categories == {3} and ds.num_boxes() == 1
    (g,) = ds.gt_for(7)
    assert g.box.as_tuple() == (10.0, 10.0, 30.0, 40.0)
    assert ds.category_names[3] == "carrot"


def test_unknown_image_is_named(tmp_path):
    bad = dict(MINIMAL, annotations=[{"id": 1, "image_id": 99, "category_id": 3, "bbox": [0, 0, 1, 1]}])
    with pytest.raises(IngestionError, match="unknown image_id 99"):
        load_ground_truth(write(tmp_path, "gt.json", bad))


def test_malformed_and_missing_keys(tmp_path):
    with pytest.raises(IngestionError, match="malformed JSON at line 1"):
        load_ground_truth(write(tmp_path, "a.json", '{"images": ['))
    with pytest.raises(IngestionError, match="missing required key 'categories'"):
        load_ground_truth(write(tmp_path, "b.json", {"images": [], "annotations": []}))
    bad = dict(MINIMAL, annotations=[{"id": 1, "image_id": 7, "category_id": 3, "bbox": [0, 0, -1, 1]}])
    with pytest.raises(IngestionError, match=r"annotations\[0\]: negative bbox size"):
        load_ground_truth(write(tmp_path, "c.json", bad))


def test_detection_files(tmp_path):
    assert len(load_detections(write(tmp_path, "e.json", []))) == 0
    run = load_detections(write(tmp_path, "yolo.json", [{"image_id": 1, "category_id": 2,
                                                         "bbox": [1, 2, 3, 4], "score": 0.9}]))
    assert run.model_name == "yolo"
    (d,) = run.for_image(1)
    assert d.confidence == 0.9 and d.box.as_tuple() == (1.0, 2.0, 4.0, 6.0)


def test_detection_errors_reported_per_record():
    recs = [{"image_id": 1, "category_id": 1, "bbox": [0, 0, 1, 1], "score": 1.2},
            {"image_id": 1, "category_id": 1, "bbox": [0, 0, 1, 1], "score": 0.5},
            {"image_id": 1, "category_id": 1, "bbox": [0, 0, -2, 1], "score": 0.5},
            {"image_id": 1, "bbox": [0, 0, 1, 1], "score": 0.5}]
    with pytest.raises(IngestionError) as e:
        parse_detections(recs, "m")
    assert len(e.value.problems) == 3
    assert "record 0: score 1.2 outside [0, 1]" in e.value.problems[0]
    assert e.value.problems[1].startswith("record 2")
    assert e.value.problems[2].startswith("record 3: missing category_id")


coord = st.floats(0, 2000, allow_nan=False)


@given(st.lists(st.tuples(coord, coord, st.floats(0, 500), st.floats(0, 500), st.floats(0, 1),
                          st.integers(1, 5)), max_size=20))
def test_round_trip(tmp_path_factory, items):
    fused = {k % 3: [] for k in range(3)}
    for k, (x, y, w, h, s, c) in enumerate(items):
        fused[k % 3].append(FusedBox(BoundingBox(x, y, x + w, y + h), c, s, 1))
    path = write_detections(tmp_path_factory.mktemp("rt") / "f.json", fused)
    back = load_detections(path)
    for image, boxes in fused.items():
        got = back.for_image(image)
        assert len(got) == len(boxes)
        for f, d in zip(boxes, got):
            assert np.allclose(f.box.as_tuple(), d.box.as_tuple(), rtol=0, atol=1e-6)
            assert (d.category, d.confidence) == (f.category, f.confidence)
