"""Command line entry point: ``detfusion {synth,fuse,eval,optimize,sweep,bench}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .coco import IngestionError
from .de import DeConfig
from .harness import (RunConfig, WeightProfile, cmd_bench, cmd_eval, cmd_fuse, cmd_optimize,
                      cmd_sweep, cmd_synth)
from .synth import DEFAULT_MODELS, NoiseProfile, SyntheticSpec, planted_spec
from .wbf import RESCALE_MODES, WbfConfig

METRIC_FLAGS = {"map50": "map50", "map5095": "map50_95"}


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _noise_profile(text: str) -> NoiseProfile:
    """``name:sigma:miss:fp[:confidence]``"""
    parts = text.split(":")
    if not 4 <= len(parts) <= 5:
        raise argparse.ArgumentTypeError("model spec must be name:sigma:miss:fp[:confidence]")
    name, *nums = parts
    vals = [float(x) for x in nums]
    kw = dict(sigma=vals[0], miss_rate=vals[1], fp_rate=vals[2])
    if len(vals) == 4:
        kw["confidence"] = vals[3]
    return NoiseProfile(name, **kw)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--metric", choices=sorted(METRIC_FLAGS), default="map5095")
    p.add_argument("--iou-match-thr", type=float, default=0.55)
    p.add_argument("--skip-thr", type=float, default=0.0)
    p.add_argument("--rescale", choices=RESCALE_MODES, default="min")
    p.add_argument("--per-category", action="store_true",
                   help="only cluster boxes of the same category")
    p.add_argument("--np", dest="pop_size", type=int, default=10)
    p.add_argument("--generations", type=int, default=40)
    p.add_argument("--out-dir", type=Path, default=Path("out"))
    p.add_argument("-v", "--verbose", action="store_true")


def _wbf(args) -> WbfConfig:
    return WbfConfig(args.iou_match_thr, args.skip_thr, not args.per_category, args.rescale)


def _de(args) -> DeConfig:
    return DeConfig(
        pop_size=args.pop_size, generations=args.generations, seed=args.seed,
        fitness_metric=METRIC_FLAGS[args.metric],
        local_search_budget=getattr(args, "local_search_budget", 0),
        one_hot_seeding=getattr(args, "include_one_hot_seeding", False),
        strict_reevaluation=getattr(args, "strict", False),
        workers=getattr(args, "workers", 1),
    )


def _run_config(args) -> RunConfig:
    return RunConfig(
        gt_path=args.gt, det_paths=list(args.detections), out_dir=args.out_dir,
        de=_de(args), wbf=_wbf(args), val_ratio=args.val_ratio,
        split_seed=args.split_seed,
        val_images=_ints(args.val_images) if args.val_images else None,
        test_images=_ints(args.test_images) if args.test_images else None,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="detfusion", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic ground truth and detector outputs")
    _common(p)
    p.add_argument("--images", type=int, default=100)
    p.add_argument("--categories", type=int, default=3)
    p.add_argument("--boxes-per-image", type=_ints, default=[1, 4], help="min,max")
    p.add_argument("--box-size", type=_floats, default=[32.0, 128.0], help="min,max")
    p.add_argument("--model", dest="models", type=_noise_profile, action="append",
                   help="name:sigma:miss:fp[:confidence]; repeatable")
    p.add_argument("--preset", choices=["default", "planted"], default="default")

    p = sub.add_parser("fuse", help="fuse detection files with fixed weights")
    _common(p)
    p.add_argument("detections", nargs="+", type=Path)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--weights", type=_floats)
    g.add_argument("--profile", type=Path, help="weights.json written by optimize")
    p.add_argument("--method", choices=["wbf", "nms"], default="wbf")
    p.add_argument("--output", type=Path, help="defaults to <out-dir>/fused.json")

    p = sub.add_parser("eval", help="mAP50 / mAP50-95 of detection files")
    _common(p)
    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("detections", nargs="+", type=Path)
    p.add_argument("--scheme", choices=["101", "all"], default="101")
    p.add_argument("--max-dets", type=int, default=None)

    for name, helptext in (("optimize", "optimize fusion weights by differential evolution"),
                           ("sweep", "repeat optimize over NP or G")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.add_argument("--gt", type=Path, required=True)
        p.add_argument("detections", nargs="+", type=Path)
        p.add_argument("--val-ratio", type=float, default=0.5)
        p.add_argument("--split-seed", type=int, default=None)
        p.add_argument("--val-images", default=None, help="comma-separated image ids")
        p.add_argument("--test-images", default=None, help="comma-separated image ids")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--local-search-budget", type=int, default=0)
        p.add_argument("--include-one-hot-seeding", action="store_true")
        p.add_argument("--strict", action="store_true", help="re-score targets every generation")
        if name == "sweep":
            p.add_argument("--axis", choices=["NP", "G"], required=True)
            p.add_argument("--values", type=_ints, required=True)

    p = sub.add_parser("bench", help="timing of fusion and of full runs")
    _common(p)
    p.add_argument("--sizes", type=_ints, default=[250, 500, 1000, 2000], help="box counts")
    p.add_argument("--g-values", type=_ints, default=[10, 20, 40])
    p.add_argument("--np-values", type=_ints, default=[5, 10, 20])
    p.add_argument("--bench-images", type=int, default=20)
    p.add_argument("--repeats", type=int, default=3)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except (IngestionError, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command == "synth":
        if args.preset == "planted":
            spec = planted_spec(args.images, args.seed)
        else:
            spec = SyntheticSpec(
                n_images=args.images, n_categories=args.categories,
                boxes_per_image=tuple(args.boxes_per_image), box_size=tuple(args.box_size),
                models=tuple(args.models) if args.models else DEFAULT_MODELS, seed=args.seed)
        gt, dets = cmd_synth(spec, args.out_dir)
        print(gt)
        for d in dets:
            print(d)
    elif args.command == "fuse":
        if args.profile:
            weights = WeightProfile.load(args.profile).weights
        else:
            weights = args.weights or [1.0] * len(args.detections)
        out = args.output or args.out_dir / "fused.json"
        print(cmd_fuse(args.detections, weights, out, _wbf(args), args.method))
    elif args.command == "eval":
        cmd_eval(args.gt, args.detections, args.out_dir, args.scheme, args.max_dets)
    elif args.command == "optimize":
        res = cmd_optimize(_run_config(args))
        print((Path(args.out_dir) / "summary.txt").read_text(), end="")
        del res
    elif args.command == "sweep":
        print(cmd_sweep(_run_config(args), args.axis, args.values).read_text(), end="")
    elif args.command == "bench":
        summary = cmd_bench(args.out_dir, args.sizes, args.g_values, args.np_values,
                            n_images=args.bench_images, repeats=args.repeats, seed=args.seed)
        print(json.dumps(summary, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
