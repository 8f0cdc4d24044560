"""File-level commands: synth, fuse, eval, optimize, sweep, bench.

Data outputs are deterministic for a fixed seed; wall-clock times and
timestamps go to ``metadata.json`` so that data files can be diffed.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .boxes import BoundingBox, Dataset, Detection, ModelRun
from .coco import load_detections, load_ground_truth, write_detections, write_ground_truth
from .de import ConvergenceHistory, DeConfig, FitnessFunction, check_inputs, evolve, run_deihdl, stream
from .metrics import EvalReport, evaluate
from .nms import nms
from .synth import SyntheticSpec, generate
from .wbf import WbfConfig, weighted_boxes_fusion

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    gt_path: Path
    det_paths: list[Path]
    out_dir: Path
    de: DeConfig = field(default_factory=DeConfig)
    wbf: WbfConfig = field(default_factory=WbfConfig)
    val_ratio: float = 0.5
    split_seed: int | None = None     # defaults to de.seed
    val_images: list[int] | None = None
    test_images: list[int] | None = None
    model_names: list[str] | None = None


@dataclass
class WeightProfile:
    model_names: list[str]
    weights: list[float]
    fitness: float
    metric: str
    config_fingerprint: str
    created: str = ""

    def __post_init__(self) -> None:
        if len(self.model_names) != len(self.weights):
            raise ValueError("one weight per model name required")

    def to_json(self) -> str:
        d = asdict(self)
        d.pop("created")
        return json.dumps(d, indent=2) + "\n"

    @classmethod
    def load(cls, path) -> "WeightProfile":
        return cls(**json.loads(Path(path).read_text()))


def split_dataset(ds: Dataset, ratio: float = 0.5, seed: int = 0,
                  val_images: Sequence[int] | None = None,
                  test_images: Sequence[int] | None = None) -> tuple[Dataset, Dataset]:
    """Validation/test split by explicit ids, or by a seeded shuffle at ``ratio``."""
    if val_images is not None:
        val_ids = set(val_images)
        test_ids = set(test_images) if test_images is not None else ds.images - val_ids
    else:
        if not 0.0 <= ratio <= 1.0:
            raise ValueError("val ratio must be in [0, 1]")
        ids = np.array(sorted(ds.images))
        stream(seed, 3).shuffle(ids)
        n_val = int(round(ratio * len(ids)))
        val_ids, test_ids = set(ids[:n_val].tolist()), set(ids[n_val:].tolist())
    return ds.subset(val_ids, "validation"), ds.subset(test_ids, "test")


def load_inputs(cfg: RunConfig) -> tuple[Dataset, list[ModelRun]]:
    ds = load_ground_truth(cfg.gt_path)
    names = cfg.model_names or [Path(p).stem for p in cfg.det_paths]
    if len(names) != len(cfg.det_paths):
        raise ValueError("one model name per detection file required")
    return ds, [load_detections(p, n) for p, n in zip(cfg.det_paths, names)]


def fuse_runs(runs: Sequence[ModelRun], weights: Sequence[float], wbf_cfg: WbfConfig | None = None,
              images=None, method: Literal["wbf", "nms"] = "wbf") -> dict[int, list]:
    if len(weights) != len(runs):
        raise ValueError(f"got {len(weights)} weights for {len(runs)} models")
    if images is None:
        images = set().union(*(r.detections.keys() for r in runs))
    out = {}
    for image in sorted(images):
        boxes = [r.for_image(image) for r in runs]
        if method == "wbf":
            out[image] = weighted_boxes_fusion(boxes, weights, wbf_cfg)
        elif method == "nms":
            out[image] = nms(boxes, weights, (wbf_cfg or WbfConfig()).iou_match_threshold)
        else:
            raise ValueError(f"unknown fusion method {method!r}")
    return out


def _write_metadata(out_dir: Path, **extra) -> None:
    meta = {"created": datetime.now(timezone.utc).isoformat(timespec="seconds"), **extra}
    (out_dir / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n")


def comparison_row(name: str, report: EvalReport) -> str:
    return f"{name:<24} {100 * report.map50:>9.2f} {100 * report.map50_95:>13.2f}"


COMPARISON_HEADER = f"{'model':<24} {'mAP50 (%)':>9} {'mAP50-95 (%)':>13}"


# ---------------------------------------------------------------- synth

def cmd_synth(spec: SyntheticSpec, out_dir) -> tuple[Path, list[Path]]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds, runs = generate(spec)
    gt_path = write_ground_truth(out_dir / "gt.json", ds)
    det_paths = [write_detections(out_dir / f"{r.model_name}.json", r.detections) for r in runs]
    return gt_path, det_paths


# ---------------------------------------------------------------- fuse

def cmd_fuse(det_paths: Sequence, weights: Sequence[float], out_path, wbf_cfg: WbfConfig | None = None,
             method: Literal["wbf", "nms"] = "wbf") -> Path:
    runs = [load_detections(p) for p in det_paths]
    if len(weights) != len(runs):
        raise ValueError(f"got {len(weights)} weights for {len(runs)} detection files")
    return write_detections(out_path, fuse_runs(runs, weights, wbf_cfg, method=method))


# ---------------------------------------------------------------- eval

def cmd_eval(gt_path, det_paths: Sequence, out_dir, scheme="101", max_dets=None,
             echo=print) -> dict[str, EvalReport]:
    ds = load_ground_truth(gt_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = {}
    echo(COMPARISON_HEADER)
    for p in det_paths:
        run = load_detections(p)
        rep = evaluate(run.detections, ds, scheme=scheme, max_dets=max_dets, keep_curves=False)
        reports[run.model_name] = rep
        (out_dir / f"eval_{run.model_name}.json").write_text(json.dumps(rep.to_dict(), indent=2) + "\n")
        echo(comparison_row(run.model_name, rep))
    return reports


# ---------------------------------------------------------------- optimize

@dataclass
class OptimizeResult:
    profile: WeightProfile
    history: ConvergenceHistory
    test_reports: dict[str, EvalReport]
    wallclock_s: float


def _optimize(cfg: RunConfig, ds: Dataset, runs: list[ModelRun]) -> OptimizeResult:
    if len(runs) < 2:
        raise ValueError("optimize needs at least two models")
    split_seed = cfg.de.seed if cfg.split_seed is None else cfg.split_seed
    val, test = split_dataset(ds, cfg.val_ratio, split_seed, cfg.val_images, cfg.test_images)
    if not val.images:
        raise ValueError("validation split is empty")
    check_inputs(val, runs)

    t0 = time.perf_counter()
    best, history = run_deihdl(cfg.de, val, runs, cfg.wbf)
    wall = time.perf_counter() - t0

    names = [r.model_name for r in runs]
    profile = WeightProfile(names, [float(w) for w in best.weights], float(best.fitness),
                            cfg.de.fitness_metric, cfg.de.fingerprint(),
                            datetime.now(timezone.utc).isoformat(timespec="seconds"))
    reports: dict[str, EvalReport] = {}
    if test.images:
        for r in runs:
            reports[r.model_name] = evaluate(r.detections, test, keep_curves=False)
        uniform = [1.0] * len(runs)
        reports["nms_uniform"] = evaluate(fuse_runs(runs, uniform, cfg.wbf, test.images, "nms"), test,
                                          keep_curves=False)
        reports["wbf_uniform"] = evaluate(fuse_runs(runs, uniform, cfg.wbf, test.images), test,
                                          keep_curves=False)
        reports["ensemble"] = evaluate(fuse_runs(runs, profile.weights, cfg.wbf, test.images), test,
                                       keep_curves=False)
    return OptimizeResult(profile, history, reports, wall)


def write_optimize_outputs(res: OptimizeResult, out_dir: Path, workers: int) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "weights.json").write_text(res.profile.to_json())
    (out_dir / "convergence.csv").write_text(res.history.to_csv())
    lines = [f"best {res.profile.metric} on validation: {res.profile.fitness:.6f}",
             "weights: " + ", ".join(f"{n}={w:.4f}" for n, w in
                                     zip(res.profile.model_names, res.profile.weights)),
             f"generations: {len(res.history) - 1}", ""]
    if res.test_reports:
        lines += ["test split:", COMPARISON_HEADER]
        lines += [comparison_row(k, v) for k, v in res.test_reports.items()]
        tests = {k: {"map50": v.map50, "map50_95": v.map50_95} for k, v in res.test_reports.items()}
        (out_dir / "test_report.json").write_text(json.dumps(tests, indent=2) + "\n")
    (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")
    _write_metadata(out_dir, created_profile=res.profile.created, wallclock_s=res.wallclock_s,
                    workers=workers)


def cmd_optimize(cfg: RunConfig) -> OptimizeResult:
    ds, runs = load_inputs(cfg)
    res = _optimize(cfg, ds, runs)
    write_optimize_outputs(res, Path(cfg.out_dir), cfg.de.workers)
    return res


# ---------------------------------------------------------------- sweep

SWEEP_AXES = {"NP": "pop_size", "G": "generations"}


def cmd_sweep(cfg: RunConfig, axis: str, values: Sequence[int]) -> Path:
    """One optimize run per value of ``axis`` with everything else fixed.

    ``sweep.csv`` holds the summary; each run's convergence curve lands in
    ``<axis>_<value>/convergence.csv``.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {sorted(SWEEP_AXES)}")
    if not values:
        raise ValueError("no sweep values given")
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds, runs = load_inputs(cfg)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["axis", "value", "best_fitness", "wallclock_s"])
    for v in values:
        sub = replace(cfg, de=replace(cfg.de, **{SWEEP_AXES[axis]: int(v)}),
                      out_dir=out_dir / f"{axis}_{v}")
        res = _optimize(sub, ds, runs)
        write_optimize_outputs(res, Path(sub.out_dir), sub.de.workers)
        writer.writerow([axis, int(v), repr(res.profile.fitness), f"{res.wallclock_s:.4f}"])
        log.info("%s=%s best=%.6f (%.1fs)", axis, v, res.profile.fitness, res.wallclock_s)
    path = out_dir / "sweep.csv"
    path.write_text(buf.getvalue())
    return path


# ---------------------------------------------------------------- bench

def _timed(jobs: Sequence, repeats: int) -> list[float]:
    """Best-of-``repeats`` wall time per job.

    Repeats are interleaved across jobs so a slow patch on a busy machine
    spreads over all of them instead of inflating one.
    """
    best = [float("inf")] * len(jobs)
    for _ in range(repeats):
        for k, fn in enumerate(jobs):
            t0 = time.perf_counter()
            fn()
            best[k] = min(best[k], time.perf_counter() - t0)
    return best


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def _wbf_instance(n_boxes: int, seed: int, n_models: int = 3):
    """One image holding ``n_boxes`` detections: each object seen by every model."""
    rng = stream(seed, 4, n_boxes)
    per_model = [[] for _ in range(n_models)]
    n_obj = max(1, n_boxes // n_models)
    for k in range(n_boxes):
        obj = k % n_obj
        cx, cy = (obj % 100) * 100.0, (obj // 100) * 100.0
        j = rng.normal(scale=2.0, size=4)
        box = BoundingBox(cx + j[0], cy + j[1], cx + 50 + j[2], cy + 50 + j[3])
        per_model[k % n_models].append(Detection(box, 1, float(rng.uniform(0.1, 1.0)), 0))
    return per_model


def cmd_bench(out_dir, box_sizes: Sequence[int] = (250, 500, 1000, 2000),
              generations: Sequence[int] = (10, 20, 40), pop_sizes: Sequence[int] = (5, 10, 20),
              base_generations: int = 10, base_pop: int = 10, n_images: int = 20,
              repeats: int = 3, seed: int = 0) -> dict:
    """Wall-clock of fusion vs box count and of a full run vs G and NP."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    labels: list[tuple[str, int]] = []
    jobs = []

    for n in box_sizes:
        inst = _wbf_instance(n, seed)
        labels.append(("N_B", n))
        jobs.append(lambda inst=inst: weighted_boxes_fusion(inst, [1.0, 0.7, 0.4]))

    ds, runs = generate(SyntheticSpec(n_images=n_images, seed=seed))
    fn = FitnessFunction(ds, runs, WbfConfig(), "map50")

    def full_run(g: int, np_: int):
        cfg = DeConfig(pop_size=np_, generations=g, seed=seed, fitness_metric="map50")
        # fresh cache per run so every generation pays for its evaluations
        return lambda: evolve(cfg, fn, len(runs))

    for g in generations:
        labels.append(("G", g))
        jobs.append(full_run(g, base_pop))
    for p in pop_sizes:
        labels.append(("NP", p))
        jobs.append(full_run(base_generations, p))
    rows = [(a, v, t) for (a, v), t in zip(labels, _timed(jobs, repeats))]

    summary: dict = {"slopes": {}, "doubling_ratios": {}}
    for axis in ("N_B", "G", "NP"):
        pts = {v: t for a, v, t in rows if a == axis}
        xs = sorted(pts)
        if len(xs) >= 2:
            summary["slopes"][axis] = loglog_slope(xs, [pts[x] for x in xs])
        summary["doubling_ratios"][axis] = {
            f"{x}->{2 * x}": pts[2 * x] / pts[x] for x in xs if 2 * x in pts
        }
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["axis", "value", "wallclock_s"])
    for a, v, t in rows:
        w.writerow([a, v, f"{t:.6f}"])
    (out_dir / "bench.csv").write_text(buf.getvalue())
    (out_dir / "bench_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary
