"""Print how the best individual's weights move across generations.

Reads a ``convergence.csv`` written by ``detfusion optimize`` (or runs a
fresh optimization on synthetic data when no file is given).
"""
import argparse
import csv
from pathlib import Path

from detfusion.de import DeConfig
from detfusion.harness import RunConfig, cmd_optimize, cmd_synth
from detfusion.synth import SyntheticSpec


def bar(w: float, width: int = 20) -> str:
    n = round(w * width)
    return "#" * n + "." * (width - n)


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("convergence", nargs="?", type=Path)
    p.add_argument("--out-dir", type=Path, default=Path("out/trajectory"))
    args = p.parse_args()

    path = args.convergence
    if path is None:
        gt, dets = cmd_synth(SyntheticSpec(n_images=100, seed=2), args.out_dir / "data")
        cmd_optimize(RunConfig(gt, list(dets), args.out_dir, de=DeConfig(seed=2)))
        path = args.out_dir / "convergence.csv"

    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    wcols = [c for c in rows[0] if c.startswith("w_")]
    prev = None
    for r in rows:
        ws = tuple(float(r[c]) for c in wcols)
        if ws == prev:
            continue  # only generations where the best individual changed
        prev = ws
        cells = "  ".join(f"{c}={w:.3f} {bar(w)}" for c, w in zip(wcols, ws))
        print(f"g={int(r['generation']):>3} best={float(r['best_fitness']):.4f}  {cells}")


if __name__ == "__main__":
    main()
