"""RPD versus a baseline on Datasaurus-Grid at desk scale.

    python3 scripts/desk_experiment.py --seeds 0 1 2 --out runs/desk.csv

Trains a VQ-VAE prior and an RPD predictor per seed, then the baseline, and
reports RW-1WD and 1WD against the data replicated five times.
"""

import argparse
import csv
import sys
from pathlib import Path

from rpd.experiments import desk_experiment


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--scale", type=float, default=0.1)
    p.add_argument("--rpd-mode", choices=("rpd-eps", "rpd-v"), default="rpd-eps")
    p.add_argument("--baseline", choices=("ddpm", "vpred"), default="ddpm")
    p.add_argument("--prior-steps", type=int, default=5000)
    p.add_argument("--rpd-iters", type=int, help="default: 8000")
    p.add_argument("--baseline-iters", type=int, help="default: 16000")
    p.add_argument("--tsv", help="DatasaurusDozen TSV; the procedural stand-in is used otherwise")
    p.add_argument("--out", help="CSV of per-run results")
    args = p.parse_args(argv)

    def show(run):
        print(f"{run.mode:8s} seed {run.seed}: RW-1WD {run.rw_w1:.5f}  1WD {run.w1:.5f}  "
              f"loss {run.final_loss:.4f}  ({run.seconds:.0f} s)", flush=True)

    res = desk_experiment(tuple(args.seeds), args.scale, args.rpd_mode, args.baseline, args.prior_steps,
                          args.rpd_iters, args.baseline_iters, args.tsv, progress=show)
    a, b = res.median(args.rpd_mode), res.median(args.baseline)
    print(f"median RW-1WD: {args.rpd_mode} {a:.5f}, {args.baseline} {b:.5f}")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["mode", "seed", "rw_w1", "w1", "final_loss", "seconds"])
            for r in res.runs:
                w.writerow([r.mode, r.seed, repr(r.rw_w1), repr(r.w1), repr(r.final_loss), f"{r.seconds:.1f}"])
    return 0 if a < b else 1


if __name__ == "__main__":
    sys.exit(main())
