"""Command-line entry point: ``rpd <command> [flags]``.

Commands: make-data, train, sample, eval, verify, plot. Every flag can also be
given in a ``--config`` file of ``key = value`` lines (``#`` starts a comment,
keys are flag names with or without the leading dashes); flags on the command
line win. Exit codes: 0 success, 1 verification or metric failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from rpd import __version__
from rpd.data import (DEFAULT_SPACING, GridSpec, PointSet2D, build_grid, load_datasaurus,
                      synthetic_datasaurus, synthetic_sources, write_datasaurus_tsv)
from rpd.errors import ConfigurationError, IngestionError, MetricError, TrainingError, UsageError
from rpd.metrics import region_wise_w1, wasserstein1, write_metrics_csv
from rpd.nncore import load_predictor, save_predictor
from rpd.prior import TrivialNormalPrior, VqVaeConfig, load_prior, save_prior, vqvae_train
from rpd.sampler import default_schedule, generate, write_samples_csv, write_trajectories_csv
from rpd.schedule import reduce
from rpd.train import AUX_INPUTS, MODES, TrainConfig, train
from rpd.verify import run_verification

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
TSV_NAMES = ("DatasaurusDozen.tsv", "DatasaurusDozen-Long.tsv", "datasaurus.tsv")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rpd", description="Residual prior diffusion on 2D point sets")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key = value file mirroring the flags")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("make-data", help="build the Datasaurus-Grid training and reference sets")
    common(sp)
    sp.add_argument("--tsv", help="DatasaurusDozen TSV (default: $RPD_DATA_DIR)")
    sp.add_argument("--synthetic", action="store_true",
                    help="use the built-in procedural stand-in when no TSV is found")
    sp.add_argument("--scale", type=float, default=0.1)
    sp.add_argument("--hetero", action="store_true", help="log-spaced per-cell scales in [0.05, 1]")
    sp.add_argument("--grid-spacing", type=float, default=DEFAULT_SPACING)
    sp.add_argument("--replicas", type=int, default=5, help="copies of the data in the reference set")

    sp = sub.add_parser("train", help="train the prior (RPD modes) and the diffusion predictor")
    common(sp)
    sp.add_argument("--data", required=False, help="dataset CSV (cell, x, y)")
    sp.add_argument("--mode", choices=MODES, default="rpd-eps")
    sp.add_argument("--steps", type=int, default=200, help="diffusion steps T")
    sp.add_argument("--iters", type=int, help="training iterations (default: desk preset)")
    sp.add_argument("--batch", type=int, default=1278)
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--aux", choices=AUX_INPUTS, default="omega")
    sp.add_argument("--delta", type=float, default=0.01)
    sp.add_argument("--prior", help="existing prior checkpoint (skips VQ-VAE training)")
    sp.add_argument("--prior-iters", type=int, default=5000)
    sp.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    sp.add_argument("--log-every", type=int, default=100)
    sp.add_argument("--checkpoint-every", type=int, default=0)
    sp.add_argument("--seeds", help="comma-separated seeds; each goes to OUT/seed<k>")
    sp.add_argument("--jobs", type=int, default=1, help="parallel seeds")

    sp = sub.add_parser("sample", help="generate points from a trained run")
    common(sp)
    sp.add_argument("--ckpt", required=False, help="run directory written by train")
    sp.add_argument("--mode", choices=MODES, help="must match the trained mode if given")
    sp.add_argument("--count", type=int, default=6390)
    sp.add_argument("--infer-steps", type=int, help="reduced number of inference steps S")
    sp.add_argument("--spacing", choices=("even", "quadratic"), default="even")
    sp.add_argument("--sigma-min", type=float, default=1e-3)
    sp.add_argument("--trajectories", type=int, default=0, help="record this many trajectories")
    sp.add_argument("--seeds", help="comma-separated seeds; reads/writes OUT/seed<k>")
    sp.add_argument("--jobs", type=int, default=1)

    sp = sub.add_parser("eval", help="1WD and region-wise 1WD against a reference set")
    common(sp)
    sp.add_argument("--samples", required=False)
    sp.add_argument("--reference", required=False)
    sp.add_argument("--grid-spacing", type=float, default=DEFAULT_SPACING)
    sp.add_argument("--max-exact", type=int, default=2000)

    sp = sub.add_parser("verify", help="run the closed-form identity suite")
    common(sp)
    sp.add_argument("--delta", type=float, default=0.0)
    sp.add_argument("--draws", type=int, default=10000)

    sp = sub.add_parser("plot", help="SVG scatter and trajectory plots")
    common(sp)
    sp.add_argument("--samples", required=False)
    sp.add_argument("--reference")
    sp.add_argument("--trajectories-csv", dest="trajectories_csv")
    sp.add_argument("--grid-spacing", type=float, default=DEFAULT_SPACING)
    return p


def _read_config(path) -> dict:
    cfg = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        cfg[key.lstrip("-").replace("-", "_")] = val
    return cfg


def _apply_config(parser, argv):
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    cfg = _read_config(args.config)
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    sp = sub.choices[args.command]
    actions = {a.dest: a for a in sp._actions}
    defaults = {}
    for key, val in cfg.items():
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            raise UsageError(f"unknown config key {key!r} for {args.command}")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = val.lower() in ("1", "true", "yes", "on")
        else:
            conv = action.type or str
            try:
                defaults[key] = conv(val)
            except ValueError:
                raise UsageError(f"bad value {val!r} for config key {key!r}") from None
            if action.choices is not None and defaults[key] not in action.choices:
                raise UsageError(f"{key} must be one of {list(action.choices)}")
    sp.set_defaults(**defaults)
    return parser.parse_args(argv)


def _require(args, *names):
    for n in names:
        if getattr(args, n, None) in (None, ""):
            raise UsageError(f"{args.command} needs --{n.replace('_', '-')}")


def _find_tsv(args):
    if args.tsv:
        if not Path(args.tsv).is_file():
            raise UsageError(f"Datasaurus TSV not found: {args.tsv}")
        return Path(args.tsv)
    data_dir = os.environ.get("RPD_DATA_DIR")
    if data_dir:
        for name in TSV_NAMES:
            if (Path(data_dir) / name).is_file():
                return Path(data_dir) / name
    if args.synthetic:
        return None
    raise UsageError("no Datasaurus TSV found: pass --tsv, set RPD_DATA_DIR, "
                     "or use --synthetic for the built-in stand-in")


def cmd_make_data(args) -> int:
    tsv = _find_tsv(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if tsv is None:
        write_datasaurus_tsv(synthetic_datasaurus(), out / "datasaurus_standin.tsv")
        sources = synthetic_sources()
        print("using the procedural Datasaurus stand-in (not the real data)", file=sys.stderr)
    else:
        sources = load_datasaurus(tsv)
    spec = (GridSpec.hetero(spacing=args.grid_spacing) if args.hetero
            else GridSpec.uniform(args.scale, args.grid_spacing))
    grid = build_grid(sources, spec)
    grid.to_csv(out / "dataset.csv")
    grid.replicate(args.replicas).to_csv(out / "reference.csv")
    print(f"wrote {len(grid)} points to {out / 'dataset.csv'} "
          f"and {len(grid) * args.replicas} to {out / 'reference.csv'}")
    return EXIT_OK


def _seed_list(args):
    if getattr(args, "seeds", None):
        try:
            return [int(s) for s in args.seeds.split(",") if s.strip()]
        except ValueError:
            raise UsageError(f"bad --seeds value {args.seeds!r}") from None
    return None


def _train_one(args, seed: int, out: Path) -> str:
    data = PointSet2D.from_csv(args.data)
    out.mkdir(parents=True, exist_ok=True)
    cfg = TrainConfig.desk(args.mode, seed=seed, T=args.steps, batch_size=args.batch, lr=args.lr,
                           aux=args.aux, delta=args.delta, dtype=args.dtype, log_every=args.log_every,
                           checkpoint_every=args.checkpoint_every, out_dir=str(out))
    if args.iters is not None:
        cfg.iterations = args.iters
    if cfg.is_baseline:
        prior = TrivialNormalPrior()
    elif args.prior:
        prior = load_prior(args.prior)
    else:
        prior = vqvae_train(data, args.prior_iters, seed=seed, config=VqVaeConfig())
    save_prior(prior, out / "prior.npz")
    pred, log = train(data, prior, cfg)
    save_predictor(pred, out / "predictor.npz")
    log.to_csv(out / "train_log.csv")
    return f"seed {seed}: final loss {log.losses[-1] if log.losses else float('nan'):.5f} -> {out}"


def _run_seeds(fn, args, seeds):
    out = Path(args.out)
    if seeds is None:
        return [fn(args, args.seed, out)]
    targets = [(s, out / f"seed{s}") for s in seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            return list(ex.map(fn, [args] * len(targets), *zip(*targets)))
    return [fn(args, s, d) for s, d in targets]


def cmd_train(args) -> int:
    _require(args, "data")
    for line in _run_seeds(_train_one, args, _seed_list(args)):
        print(line)
    return EXIT_OK


def _sample_one(args, seed: int, out: Path) -> str:
    ckpt = Path(args.ckpt) if _seed_list(args) is None else Path(args.ckpt) / f"seed{seed}"
    pred = load_predictor(ckpt / "predictor.npz")
    prior = load_prior(ckpt / "prior.npz")
    sched = default_schedule(pred)
    if args.infer_steps:
        sched = reduce(sched, args.infer_steps, args.spacing)
    res = generate(pred, prior, sched, count=args.count, seed=seed, mode=args.mode,
                   record_trajectory=args.trajectories > 0, sigma_min=args.sigma_min)
    out.mkdir(parents=True, exist_ok=True)
    write_samples_csv(res, out / "samples.csv")
    if res.trajectory is not None:
        write_trajectories_csv(res.trajectory[:, : args.trajectories], out / "trajectories.csv")
    return f"seed {seed}: {len(res.points)} samples -> {out / 'samples.csv'}"


def cmd_sample(args) -> int:
    _require(args, "ckpt")
    for line in _run_seeds(_sample_one, args, _seed_list(args)):
        print(line)
    return EXIT_OK


def cmd_eval(args) -> int:
    _require(args, "samples", "reference")
    a = PointSet2D.from_csv(args.samples)
    b = PointSet2D.from_csv(args.reference)
    g = wasserstein1(a, b, max_exact=args.max_exact, seed=args.seed)
    rep = region_wise_w1(a, b, args.grid_spacing)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out / "metrics.csv", g, rep)
    tag = "exact" if g.exact else f"subsampled to {g.n_a}/{g.n_b}"
    print(f"1WD    {g.value:.6f} ({tag})")
    print(f"RW-1WD {rep.value:.6f}")
    for k, r in enumerate(rep.regions):
        print(f"  region {k}: " + ("skipped (empty)" if r is None else f"{r.value:.6f} (n={r.n_a}/{r.n_b})"))
    return EXIT_OK


def cmd_verify(args) -> int:
    rep = run_verification(seed=args.seed, n_draws=args.draws, delta=args.delta)
    print(rep.format())
    if args.out and args.out != ".":
        Path(args.out).mkdir(parents=True, exist_ok=True)
        rep.to_csv(Path(args.out) / "verify.csv")
    if not rep.ok:
        print("FAILED: " + ", ".join(rep.failures), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _read_trajectories(path) -> np.ndarray:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n, steps = int(rows[:, 0].max()) + 1, int(rows[:, 1].max()) + 1
    traj = np.zeros((steps, n, 2))
    for sid, step, x, y in rows:
        traj[steps - 1 - int(step), int(sid)] = (x, y)
    return traj


def cmd_plot(args) -> int:
    from rpd.plotting import overview_and_zooms, trajectory_svg

    _require(args, "samples")
    a = PointSet2D.from_csv(args.samples)
    ref = PointSet2D.from_csv(args.reference) if args.reference else None
    written = overview_and_zooms(args.out, a, ref, args.grid_spacing)
    if args.trajectories_csv:
        path = Path(args.out) / "trajectories.svg"
        trajectory_svg(path, _read_trajectories(args.trajectories_csv), title="reverse trajectories")
        written.append(path)
    print(f"wrote {len(written)} SVG files to {args.out}")
    return EXIT_OK


COMMANDS = {"make-data": cmd_make_data, "train": cmd_train, "sample": cmd_sample,
            "eval": cmd_eval, "verify": cmd_verify, "plot": cmd_plot}


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = _apply_config(parser, argv)
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # argparse
        return int(exc.code or 0)
    except (UsageError, ConfigurationError, IngestionError, FileNotFoundError) as exc:
        print(f"rpd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MetricError, TrainingError) as exc:
        print(f"rpd: failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
