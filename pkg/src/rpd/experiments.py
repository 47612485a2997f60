"""Desk-scale comparison and auxiliary-input ablation shared by scripts and tests."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from rpd.data import PointSet2D, datasaurus_grid
from rpd.metrics import region_wise_w1, wasserstein1
from rpd.prior import VqVaeConfig, vqvae_train
from rpd.sampler import generate
from rpd.prior import TrivialNormalPrior
from rpd.train import TrainConfig, train

GT_REPLICAS = 5


@dataclass
class RunResult:
    mode: str
    seed: int
    rw_w1: float
    w1: float
    final_loss: float
    seconds: float


@dataclass
class DeskResult:
    runs: list = field(default_factory=list)

    def rw(self, mode: str) -> list[float]:
        return [r.rw_w1 for r in self.runs if r.mode == mode]

    def median(self, mode: str) -> float:
        return float(np.median(self.rw(mode)))


def run_one(data: PointSet2D, mode: str, seed: int, prior=None, iterations: int | None = None,
            count: int | None = None, dtype: str = "float32") -> RunResult:
    start = time.perf_counter()
    cfg = TrainConfig.desk(mode, seed=seed, dtype=dtype)
    if iterations is not None:
        cfg.iterations = iterations
    pred, log = train(data, prior, cfg)
    gt = data.replicate(GT_REPLICAS)
    sample_prior = prior if not cfg.is_baseline else TrivialNormalPrior()
    out = generate(pred, sample_prior, count=count or len(gt), seed=seed)
    report = region_wise_w1(out.points, gt)
    w1 = wasserstein1(out.points, gt, seed=seed).value
    return RunResult(mode, seed, report.value, w1, log.losses[-1] if log.losses else float("nan"),
                     time.perf_counter() - start)


def desk_experiment(seeds=(0, 1, 2), scale: float = 0.1, rpd_mode: str = "rpd-eps",
                    baseline: str = "ddpm", prior_steps: int = 5000, rpd_iters: int | None = None,
                    baseline_iters: int | None = None, tsv=None, progress=None) -> DeskResult:
    """Train RPD (with a VQ-VAE prior) and a baseline per seed; score RW-1WD against 5x the data."""
    data = datasaurus_grid(scale, tsv=tsv)
    result = DeskResult()
    for seed in seeds:
        prior = vqvae_train(data, prior_steps, seed=seed, config=VqVaeConfig())
        for mode, iters, p in ((rpd_mode, rpd_iters, prior), (baseline, baseline_iters, None)):
            run = run_one(data, mode, seed, p, iters)
            result.runs.append(run)
            if progress:
                progress(run)
    return result


@dataclass
class AblationResult:
    seeds: list
    omega: list
    mu: list

    @property
    def wins(self) -> int:
        return sum(o < m for o, m in zip(self.omega, self.mu))


def aux_ablation(seeds=(0, 1, 2), scale: float = 0.1, iterations: int = 4000, prior_steps: int = 5000,
                 mode: str = "rpd-eps", tsv=None, log_every: int = 100) -> AblationResult:
    """Training loss at ``iterations`` with the omega input versus the prior-mean input."""
    data = datasaurus_grid(scale, tsv=tsv)
    omega, mu = [], []
    for seed in seeds:
        prior = vqvae_train(data, prior_steps, seed=seed)
        for aux, sink in (("omega", omega), ("mu", mu)):
            cfg = TrainConfig(mode=mode, iterations=iterations, seed=seed, aux=aux, log_every=log_every)
            _, log = train(data, prior, cfg)
            sink.append(log.loss_at(iterations))
    return AblationResult(list(seeds), omega, mu)
