import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import det
from detfusion.boxes import BoundingBox, Dataset, Detection, GroundTruthBox
from detfusion.metrics import (COCO_THRESHOLDS, PrCurve, average_precision, evaluate, match_detections,
                               pr_curve)
from instances import as_tuples, gt_tuples, random_micro_dataset
from oracles import brute_ap, brute_evaluate


def gt(x0, y0, x1, y1, cat=1, image=0):
    return GroundTruthBox(BoundingBox(float(x0), float(y0), float(x1), float(y1)), cat, image)


def test_match_single_hit():
    out = match_detections([det(0, 0, 10, 9)], [gt(0, 0, 10, 10)], 0.5)
    assert (out.tp, out.fp, out.fn) == (1, 0, 0)


def test_match_no_detections():
    out = match_detections([], [gt(0, 0, 1, 1), gt(5, 5, 6, 6)], 0.5)
    assert (out.tp, out.fp, out.fn) == (0, 0, 2)


def test_match_second_detection_finds_gt_consumed():
    a = gt(0, 0, 10, 10)
    d1 = det(0, 0, 10, 8, 0.9)   # IoU 0.8
    d2 = det(0, 0, 10, 6, 0.8)   # IoU 0.6
    # listed in reverse to check that ranking, not input order, decides
    out = match_detections([d2, d1], [a], 0.5)
    assert out.is_tp == [False, True]
    assert (out.tp, out.fp, out.fn) == (1, 1, 0)
    assert out.gt_matched == [True]


def test_match_prefers_highest_iou_then_lowest_index():
    g0, g1 = gt(0, 0, 10, 10), gt(2, 0, 12, 10)
    out = match_detections([det(2, 0, 12, 10)], [g0, g1], 0.5)
    assert out.matched_gt == [1]
    twins = match_detections([det(0, 0, 10, 10)], [gt(0, 0, 10, 10), gt(0, 0, 10, 10)], 0.5)
    assert twins.matched_gt == [0]


@given(st.lists(st.tuples(st.floats(0, 1), st.booleans()), max_size=30), st.integers(0, 40))
def test_match_outcome_invariants(items, n_gt):
    hits = [h for _, h in items]
    n_gt = max(n_gt, sum(hits))
    curve = pr_curve(np.array([s for s, _ in items]), np.array(hits, dtype=bool), n_gt)
    assert np.all(np.diff(curve.recall) >= 0)
    assert np.all((curve.precision >= 0) & (curve.precision <= 1))


def test_ap_perfect_and_zero():
    perfect = pr_curve(np.array([0.9, 0.8]), np.array([True, True]), 2)
    assert average_precision(perfect) == 1.0
    assert average_precision(perfect, "all") == 1.0
    none = pr_curve(np.array([0.9, 0.8]), np.array([False, False]), 2)
    assert average_precision(none) == 0.0
    assert average_precision(PrCurve(np.zeros(0), np.zeros(0))) == 0.0


def test_ap_hand_derived_101_point():
    curve = pr_curve(np.array([0.9, 0.8]), np.array([True, False]), 2)
    assert curve.points() == [(0.5, 1.0), (0.5, 0.5)]
    assert average_precision(curve, "101") == 51 / 101
    assert brute_ap([True, False], 2) == 51 / 101
    assert average_precision(curve, "all") == 0.5


@given(st.lists(st.booleans(), min_size=1, max_size=40), st.integers(0, 100), st.sampled_from(["101", "all"]))
def test_fp_to_tp_never_hurts(hits, pick, scheme):
    n_gt = sum(hits) + 3
    scores = np.linspace(1, 0.01, len(hits))
    fps = [k for k, h in enumerate(hits) if not h]
    base = average_precision(pr_curve(scores, np.array(hits), n_gt), scheme)
    if fps:
        better = list(hits)
        better[fps[pick % len(fps)]] = True
        assert average_precision(pr_curve(scores, np.array(better), n_gt), scheme) >= base - 1e-15


@given(st.lists(st.booleans(), max_size=40), st.integers(0, 10), st.sampled_from(["101", "all"]))
def test_ap_matches_brute_force(hits, extra, scheme):
    n_gt = sum(hits) + extra
    if n_gt == 0:
        return
    scores = np.linspace(1, 0.01, len(hits)) if hits else np.zeros(0)
    got = average_precision(pr_curve(scores, np.array(hits, dtype=bool), n_gt), scheme)
    assert got == pytest.approx(brute_ap(hits, n_gt, scheme), abs=1e-12)


def _perfect_dataset():
    gts = {1: [gt(0, 0, 10, 10, 1, 1), gt(20, 20, 40, 30, 2, 1)], 2: [gt(5, 5, 15, 25, 1, 2)]}
    ds = Dataset({1, 2, 3}, gts, {1, 2, 3})
    dets = {im: [Detection(g.box, g.category, 1.0, im) for g in gl] for im, gl in gts.items()}
    return ds, dets


def test_evaluate_perfect():
    ds, dets = _perfect_dataset()
    rep = evaluate(dets, ds)
    assert rep.map50 == 1.0 and rep.map50_95 == 1.0
    assert rep.categories == (1, 2)  # category 3 has no gt and is left out


def test_evaluate_empty_detections():
    ds, _ = _perfect_dataset()
    rep = evaluate({}, ds)
    assert rep.map50 == 0.0 and rep.map50_95 == 0.0


def test_evaluate_ignores_categories_without_gt():
    ds, dets = _perfect_dataset()
    dets[1].append(Detection(BoundingBox(0, 0, 5, 5), 3, 1.0, 1))
    assert evaluate(dets, ds).map50 == 1.0


def test_evaluate_report_dict():
    ds, dets = _perfect_dataset()
    d = evaluate(dets, ds).to_dict()
    assert {"map50", "map50_95", "per_category_ap"} <= set(d)
    assert d["map50_pct"] == 100.0


def test_max_dets_cap():
    ds = Dataset({1}, {1: [gt(0, 0, 10, 10, 1, 1)]}, {1})
    dets = {1: [det(50, 50, 60, 60, 0.9, 1, 1), det(0, 0, 10, 10, 0.5, 1, 1)]}
    assert evaluate(dets, ds, max_dets=1).map50 == 0.0
    assert evaluate(dets, ds, max_dets=2).map50 == 0.5  # FP ranked above the TP


def test_threshold_validation():
    ds, dets = _perfect_dataset()
    with pytest.raises(ValueError):
        evaluate(dets, ds, thresholds=[])
    with pytest.raises(ValueError):
        evaluate(dets, ds, thresholds=[0.0])


@pytest.mark.parametrize("scheme", ["101", "all"])
def test_evaluate_matches_brute_force(scheme):
    rng = np.random.default_rng(7)
    for _ in range(100):
        ds, dets = random_micro_dataset(rng)
        rep = evaluate(dets, ds, scheme=scheme)
        ref = brute_evaluate(as_tuples(dets), gt_tuples(ds), COCO_THRESHOLDS, scheme)
        assert rep.map_per_threshold == pytest.approx(ref, abs=1e-9)


@given(st.integers(0, 2**32 - 1))
def test_monotone_confidence_transform_invariance(seed):
    ds, dets = random_micro_dataset(np.random.default_rng(seed))
    warped = {im: [Detection(d.box, d.category, d.confidence ** 3 * 0.5 + 0.25, d.image) for d in dl]
              for im, dl in dets.items()}
    assert evaluate(dets, ds).map_per_threshold == evaluate(warped, ds).map_per_threshold


@given(st.integers(0, 2**32 - 1))
def test_ap_non_increasing_in_threshold(seed):
    ds, dets = random_micro_dataset(np.random.default_rng(seed))
    rep = evaluate(dets, ds)
    for c in rep.categories:
        assert all(a >= b - 1e-15 for a, b in zip(rep.ap[c], rep.ap[c][1:]))


@given(st.integers(0, 2**32 - 1))
def test_single_image_pooling_equals_direct_matching(seed):
    ds, dets = random_micro_dataset(np.random.default_rng(seed), max_images=1)
    rep = evaluate(dets, ds, thresholds=[0.5])
    image = next(iter(ds.images))
    for c in rep.categories:
        ds_c = [d for d in dets.get(image, []) if d.category == c]
        gt_c = [g for g in ds.gt_for(image) if g.category == c]
        out = match_detections(ds_c, gt_c, 0.5)
        curve = pr_curve(np.array([d.confidence for d in ds_c]), np.array(out.is_tp, dtype=bool), len(gt_c))
        assert rep.ap[c][0] == average_precision(curve)
