"""Ancestral generation with full or reduced step schedules."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from rpd import diffusion as D
from rpd.data import PointSet2D
from rpd.errors import ConfigurationError
from rpd.nncore import Predictor
from rpd.prior import PriorModel
from rpd.schedule import ReducedSchedule, Schedule, make_log_linear
from rpd.train import network_inputs


@dataclass
class SampleResult:
    points: PointSet2D
    z: np.ndarray
    trajectory: np.ndarray | None = None  # (steps + 1, count, 2), x_T first


def _parameterization(predictor: Predictor, mode: str | None) -> str:
    trained = predictor.meta.get("parameterization", "eps")
    if mode is None:
        return trained
    wanted = {"rpd-eps": "eps", "ddpm": "eps", "eps": "eps",
              "rpd-v": "v", "vpred": "v", "v": "v"}.get(mode)
    if wanted is None:
        raise ConfigurationError(f"unknown mode {mode!r}")
    trained_mode = predictor.meta.get("mode")
    if wanted != trained or (trained_mode is not None and mode in ("rpd-eps", "rpd-v", "ddpm", "vpred")
                             and mode != trained_mode):
        raise ConfigurationError(f"predictor was trained as {trained_mode or trained!r}, not {mode!r}")
    return wanted


def default_schedule(predictor: Predictor) -> Schedule:
    m = predictor.meta
    return make_log_linear(m.get("T", predictor.T), m.get("sched_sigma_min", 0.01),
                           m.get("sched_sigma_max", 100.0))


def _reverse(predictor, prior, schedule, x, z, noise_fn, param, sigma_min, record):
    mu_hat, sigma_hat = prior.decode(z)
    aux = predictor.meta.get("aux", "none")
    delta = predictor.meta.get("delta", D.DEFAULT_DELTA)
    steps = schedule.n_steps
    net_t = schedule.timesteps
    traj = [x.copy()] if record else None
    for s in range(steps, 0, -1):
        z_emb, aux_in = network_inputs(predictor, prior, x, s, z, mu_hat, sigma_hat, schedule,
                                       param, aux, delta)
        out = predictor(x, int(net_t[s]), z_emb, aux_in)
        x = D.rpd_reverse_step(x, s, out, mu_hat, sigma_hat, schedule, noise_fn(s), param, sigma_min)
        if record:
            traj.append(x.copy())
    return x, (np.stack(traj) if record else None)


def generate(predictor: Predictor, prior: PriorModel, schedule: Schedule | ReducedSchedule | None = None,
             count: int = 6390, seed: int = 0, mode: str | None = None, record_trajectory: bool = False,
             sigma_min: float = D.DEFAULT_SIGMA_MIN, noise_scale: float = 1.0,
             x_init=None) -> SampleResult:
    """Draw ``count`` samples: ``z ~ p(z)``, ``x_T ~ N(mu(z), sigma(z)^2 I)``, then ancestral steps.

    ``noise_scale`` multiplies every Gaussian draw (0 gives the deterministic
    mean path); ``x_init`` overrides ``x_T``.
    """
    param = _parameterization(predictor, mode)
    schedule = schedule or default_schedule(predictor)
    if int(schedule.timesteps[-1]) > predictor.T:
        raise ConfigurationError("schedule is longer than the predictor's time range")
    if count < 0:
        raise ConfigurationError("count must be nonnegative")
    dim = predictor.x_dim
    if count == 0:
        empty = np.zeros((0, dim))
        traj = np.zeros((schedule.n_steps + 1, 0, dim)) if record_trajectory else None
        return SampleResult(PointSet2D(empty), np.zeros(0, dtype=np.int64), traj)
    rng = np.random.default_rng(seed)
    z = prior.sample_z(rng, count)
    mu_hat, sigma_hat = prior.decode(z)
    if x_init is None:
        x = mu_hat + sigma_hat[:, None] * (noise_scale * rng.standard_normal((count, dim)))
    else:
        x = np.array(np.broadcast_to(np.asarray(x_init, dtype=np.float64), (count, dim)))

    def noise_fn(_s):
        return noise_scale * rng.standard_normal((count, dim))

    x, traj = _reverse(predictor, prior, schedule, x, z, noise_fn, param, sigma_min, record_trajectory)
    return SampleResult(PointSet2D(x), z, traj)


def generate_fixed_z(predictor: Predictor, prior: PriorModel, schedule=None, z: int = 0,
                     seeds=(0,), mode: str | None = None, sigma_min: float = D.DEFAULT_SIGMA_MIN,
                     noise_scale: float = 1.0) -> np.ndarray:
    """One sample per seed, all sharing latent ``z``; returns ``(len(seeds), dim)``.

    Each seed drives its own stream for ``x_T`` and the reverse noise.
    """
    param = _parameterization(predictor, mode)
    schedule = schedule or default_schedule(predictor)
    seeds = list(seeds)
    dim = predictor.x_dim
    zs = np.full(len(seeds), int(z), dtype=np.int64)
    if not seeds:
        return np.zeros((0, dim))
    rngs = [np.random.default_rng(s) for s in seeds]
    mu_hat, sigma_hat = prior.decode(zs)
    eps = np.stack([r.standard_normal(dim) for r in rngs])
    x = mu_hat + sigma_hat[:, None] * (noise_scale * eps)

    def noise_fn(_s):
        return noise_scale * np.stack([r.standard_normal(dim) for r in rngs])

    x, _ = _reverse(predictor, prior, schedule, x, zs, noise_fn, param, sigma_min, False)
    return x


def family_variance(samples) -> float:
    """Mean per-coordinate variance across a fixed-z sample family."""
    s = np.asarray(samples, dtype=np.float64)
    return float(np.mean(np.var(s, axis=0))) if len(s) > 1 else 0.0


def write_samples_csv(result: SampleResult, path) -> None:
    result.points.with_regions().to_csv(path)


def write_trajectories_csv(trajectory: np.ndarray, path, schedule=None) -> None:
    """Rows ``sample, step, x, y``; ``step`` is the position in the schedule, counting down to 0."""
    n_pos = trajectory.shape[0]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample", "step", "x", "y"])
        for i in range(trajectory.shape[1]):
            for k in range(n_pos):
                step = n_pos - 1 - k
                x, y = trajectory[k, i]
                w.writerow([i, step, repr(float(x)), repr(float(y))])
