"""Single models vs NMS, uniform WBF and the optimized ensemble on the test split.

Averages over several benchmark seeds; each seed regenerates the synthetic
data and reruns the optimization.
"""
import argparse
from collections import defaultdict
from pathlib import Path

import numpy as np

from detfusion.de import DeConfig
from detfusion.harness import RunConfig, cmd_optimize, cmd_synth
from detfusion.synth import SyntheticSpec, planted_spec


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--images", type=int, default=200)
    p.add_argument("--planted", action="store_true", help="use the one-clean-two-noisy benchmark")
    p.add_argument("--generations", type=int, default=40)
    p.add_argument("--out-dir", type=Path, default=Path("out/compare"))
    args = p.parse_args()

    scores: dict[str, list[tuple[float, float]]] = defaultdict(list)
    for seed in range(args.seeds):
        spec = planted_spec(args.images, seed) if args.planted else SyntheticSpec(args.images, seed=seed)
        gt, dets = cmd_synth(spec, args.out_dir / f"data_{seed}")
        res = cmd_optimize(RunConfig(gt, list(dets), args.out_dir / f"run_{seed}",
                                     de=DeConfig(generations=args.generations, seed=seed)))
        for name, rep in res.test_reports.items():
            scores[name].append((rep.map50, rep.map50_95))

    print(f"{'method':<14} {'mAP50 (%)':>10} {'mAP50-95 (%)':>13}")
    for name, vals in scores.items():
        m = 100 * np.mean(vals, axis=0)
        print(f"{name:<14} {m[0]:10.2f} {m[1]:13.2f}")


if __name__ == "__main__":
    main()
