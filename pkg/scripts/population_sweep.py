"""Best validation fitness and test mAP as the population size grows.

Repeats the sweep over several seeds on one synthetic benchmark and writes
``np_sweep.csv`` with the per-seed numbers plus a mean/std table on stdout.
"""
import argparse
import csv
from dataclasses import replace
from pathlib import Path

import numpy as np

from detfusion.de import DeConfig
from detfusion.harness import RunConfig, cmd_optimize, cmd_synth
from detfusion.synth import SyntheticSpec


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--values", default="4,6,10,15,20,30")
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--generations", type=int, default=20)
    p.add_argument("--images", type=int, default=100)
    p.add_argument("--out-dir", type=Path, default=Path("out/np_sweep"))
    args = p.parse_args()

    gt, dets = cmd_synth(SyntheticSpec(n_images=args.images, seed=1), args.out_dir / "data")
    base = RunConfig(gt, list(dets), args.out_dir, de=DeConfig(generations=args.generations))
    rows = []
    for np_ in (int(v) for v in args.values.split(",")):
        for seed in range(args.seeds):
            cfg = replace(base, out_dir=args.out_dir / f"NP_{np_}_s{seed}",
                          de=replace(base.de, pop_size=np_, seed=seed), split_seed=0)
            res = cmd_optimize(cfg)
            rows.append((np_, seed, res.profile.fitness, res.test_reports["ensemble"].map50_95,
                         res.wallclock_s))

    with open(args.out_dir / "np_sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["NP", "seed", "val_fitness", "test_map50_95", "wallclock_s"])
        w.writerows(rows)

    print(f"{'NP':>4} {'val mean':>9} {'val std':>8} {'test mean':>10} {'time (s)':>9}")
    for np_ in sorted({r[0] for r in rows}):
        sel = np.array([r[2:] for r in rows if r[0] == np_])
        print(f"{np_:>4} {sel[:, 0].mean():9.4f} {sel[:, 0].std():8.4f} {sel[:, 1].mean():10.4f} "
              f"{sel[:, 2].mean():9.1f}")


if __name__ == "__main__":
    main()
