"""Best fitness against the number of generations, from one long run.

With elitist selection the best fitness after g generations of a G-generation
run equals that of a g-generation run with the same seed, so a single run
gives the whole curve.  ``--check`` also runs the shorter budgets and
confirms they land on the curve.
"""
import argparse
import csv
from dataclasses import replace
from pathlib import Path

from detfusion.de import DeConfig
from detfusion.harness import RunConfig, cmd_optimize, cmd_sweep, cmd_synth
from detfusion.synth import SyntheticSpec


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--generations", type=int, default=80)
    p.add_argument("--np", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--images", type=int, default=100)
    p.add_argument("--check", default="", help="comma-separated shorter G values to rerun")
    p.add_argument("--out-dir", type=Path, default=Path("out/g_sweep"))
    args = p.parse_args()

    gt, dets = cmd_synth(SyntheticSpec(n_images=args.images, seed=1), args.out_dir / "data")
    cfg = RunConfig(gt, list(dets), args.out_dir / "full",
                    de=DeConfig(pop_size=args.np, generations=args.generations, seed=args.seed))
    res = cmd_optimize(cfg)
    curve = res.history.best_fitness()
    for g in sorted({0, 1, 2, 5, 10, 20, 40, args.generations} & set(range(len(curve)))):
        print(f"G={g:>4}  best={curve[g]:.6f}")

    if args.check:
        path = cmd_sweep(replace(cfg, out_dir=args.out_dir / "check"), "G",
                         [int(v) for v in args.check.split(",")])
        with open(path) as fh:
            for row in csv.DictReader(fh):
                g, fit = int(row["value"]), float(row["best_fitness"])
                print(f"rerun G={g}: {fit:.6f} ({'matches' if fit == curve[g] else 'DIFFERS'})")


if __name__ == "__main__":
    main()
