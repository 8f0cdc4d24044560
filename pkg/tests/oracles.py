"""Slow, independent reference implementations used only by the tests.

Nothing here imports the package's geometry, fusion or metric code.
"""
from __future__ import annotations

from shapely.geometry import box as shp_box


def shapely_iou(a, b) -> float:
    """IoU from polygon areas; ``a``/``b`` are (x0, y0, x1, y1) tuples."""
    pa, pb = shp_box(*a), shp_box(*b)
    inter = pa.intersection(pb).area
    union = pa.area + pb.area - inter
    return inter / union if union > 0 else 0.0


def _coords(det):
    b = det.box
    return (b.x_min, b.y_min, b.x_max, b.y_max)


def brute_wbf(per_model, weights, iou_thr=0.55, skip_thr=0.0, agnostic=True, rescale="min"):
    """Cluster-and-average, recomputing every fused box from its member list.

    Returns a list of (coords, category, confidence, member_count).
    """
    top = max(weights)
    norm = [w / top for w in weights]
    n = len(weights)

    pool = []
    for m, dets in enumerate(per_model):
        for k, d in enumerate(dets):
            score = d.confidence * norm[m]
            if d.confidence >= skip_thr and score > 0:
                pool.append((score, m, k, d))
    pool = sorted(pool, key=lambda t: (-t[0], t[1], t[2]))

    members: list[list] = []
    fused: list[tuple] = []
    for item in pool:
        score, _, _, d = item
        pos = None
        for j, f in enumerate(fused):
            if not agnostic and members[j][0][3].category != d.category:
                continue
            if shapely_iou(f, _coords(d)) > iou_thr:
                pos = j
                break
        if pos is None:
            members.append([item])
            fused.append(_coords(d))
        else:
            members[pos].append(item)
            tot = sum(s for s, *_ in members[pos])
            fused[pos] = tuple(sum(s * _coords(dd)[c] for s, _, _, dd in members[pos]) / tot
                               for c in range(4))

    out = []
    for f, mem in zip(fused, members):
        cats = {}
        for s, _, _, d in mem:
            cats[d.category] = cats.get(d.category, 0.0) + s
        top_score = max(cats.values())
        cat = min(c for c, v in cats.items() if v == top_score)
        t = len(mem)
        conf = min(1.0, sum(s for s, *_ in mem) / t)
        if rescale == "min":
            conf = conf * min(t, n) / n
        elif rescale == "t_over_n":
            conf = min(1.0, conf * t / n)
        out.append((f, cat, conf, t))
    return out


def brute_ap(hits, num_gt, scheme="101"):
    """AP of an already-ranked TP/FP list by direct maximization over PR points."""
    if num_gt == 0:
        return None
    pts = []
    tp = fp = 0
    for h in hits:
        tp += h
        fp += not h
        pts.append((tp / num_gt, tp / (tp + fp)))
    if scheme == "101":
        total = 0.0
        for k in range(101):
            r = k / 100
            ps = [p for rr, p in pts if rr >= r]
            total += max(ps) if ps else 0.0
        return total / 101
    area, prev_r = 0.0, 0.0
    for i, (r, _) in enumerate(pts):
        area += (r - prev_r) * max(p for _, p in pts[i:])
        prev_r = r
    return area


def brute_evaluate(dets_by_image, gts_by_image, thresholds, scheme="101"):
    """mAP per threshold from first principles.

    ``dets_by_image``: image -> list of (coords, category, confidence).
    ``gts_by_image``:  image -> list of (coords, category).
    """
    cats = sorted({c for gts in gts_by_image.values() for _, c in gts})
    result = []
    for t in thresholds:
        aps = []
        for c in cats:
            ranked = []
            for image in sorted(dets_by_image):
                for pos, (coords, cat, conf) in enumerate(dets_by_image[image]):
                    if cat == c:
                        ranked.append((-conf, image, pos, coords))
            ranked.sort(key=lambda r: r[:3])
            gts = {im: [g for g, cat in gl if cat == c] for im, gl in gts_by_image.items()}
            taken = {im: [False] * len(gl) for im, gl in gts.items()}
            hits = []
            for _, image, _, coords in ranked:
                best_j, best_v = -1, -1.0
                for j, g in enumerate(gts.get(image, [])):
                    if taken[image][j]:
                        continue
                    v = shapely_iou(coords, g)
                    if v >= t and v > best_v:
                        best_j, best_v = j, v
                if best_j >= 0:
                    taken[image][best_j] = True
                hits.append(best_j >= 0)
            aps.append(brute_ap(hits, sum(len(g) for g in gts.values()), scheme))
        result.append(sum(aps) / len(aps) if aps else 0.0)
    return result
