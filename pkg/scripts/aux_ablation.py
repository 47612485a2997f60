"""Training loss with the omega auxiliary input versus the prior mean in the same slot.

    python3 scripts/aux_ablation.py --seeds 0 1 2 --iterations 4000
"""

import argparse
import sys

from rpd.experiments import aux_ablation


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--scale", type=float, default=0.1)
    p.add_argument("--iterations", type=int, default=4000)
    p.add_argument("--prior-steps", type=int, default=5000)
    p.add_argument("--mode", choices=("rpd-eps", "rpd-v"), default="rpd-eps")
    p.add_argument("--tsv")
    args = p.parse_args(argv)

    res = aux_ablation(tuple(args.seeds), args.scale, args.iterations, args.prior_steps, args.mode, args.tsv)
    for seed, o, m in zip(res.seeds, res.omega, res.mu):
        print(f"seed {seed}: loss at {args.iterations}  omega {o:.5f}  mu {m:.5f}")
    print(f"omega lower on {res.wins}/{len(res.seeds)} seeds")
    return 0 if 2 * res.wins > len(res.seeds) else 1


if __name__ == "__main__":
    sys.exit(main())
