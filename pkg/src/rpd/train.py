"""Training loops for noise- and velocity-prediction RPD and the plain baselines."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from rpd import diffusion as D
from rpd.errors import ConfigurationError, TrainingError
from rpd.nncore import DEFAULT_HIDDEN, AdamState, Predictor, adam_step, save_predictor
from rpd.prior import PriorModel, TrivialNormalPrior
from rpd.schedule import Schedule, make_log_linear

MODES = ("rpd-eps", "rpd-v", "ddpm", "vpred")
AUX_INPUTS = ("omega", "mu", "none")


@dataclass
class TrainConfig:
    mode: str = "rpd-eps"
    iterations: int = 8000
    batch_size: int = 1278
    lr: float = 1e-3
    seed: int = 0
    T: int = 200
    sched_sigma_min: float = 0.01
    sched_sigma_max: float = 100.0
    aux: str = "omega"
    delta: float = D.DEFAULT_DELTA
    hidden: tuple = DEFAULT_HIDDEN
    time_dim: int = 16
    # network arithmetic; the diffusion formulas always run in float64
    dtype: str = "float32"
    log_every: int = 100
    checkpoint_every: int = 0
    out_dir: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.aux not in AUX_INPUTS:
            raise ConfigurationError(f"unknown aux input {self.aux!r}; expected one of {AUX_INPUTS}")
        if self.iterations < 0 or self.batch_size < 1 or self.log_every < 1:
            raise ConfigurationError("iterations >= 0, batch_size >= 1 and log_every >= 1 required")
        if self.delta < 0:
            raise ConfigurationError("delta must be nonnegative")
        self.hidden = tuple(self.hidden)

    @property
    def parameterization(self) -> str:
        return "eps" if self.mode in ("rpd-eps", "ddpm") else "v"

    @property
    def is_baseline(self) -> bool:
        return self.mode in ("ddpm", "vpred")

    @property
    def effective_aux(self) -> str:
        return "none" if self.is_baseline else self.aux

    def schedule(self) -> Schedule:
        return make_log_linear(self.T, self.sched_sigma_min, self.sched_sigma_max)

    @classmethod
    def desk(cls, mode: str = "rpd-eps", **kw) -> TrainConfig:
        iters = 16000 if mode in ("ddpm", "vpred") else 8000
        return cls(mode=mode, iterations=kw.pop("iterations", iters), **kw)

    @classmethod
    def full(cls, mode: str = "rpd-eps", **kw) -> TrainConfig:
        iters = 120000 if mode in ("ddpm", "vpred") else 60000
        return cls(mode=mode, iterations=kw.pop("iterations", iters), **kw)


@dataclass
class TrainLog:
    """One record per logging interval; ``loss`` is the mean over that interval."""

    iterations: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    wall: list = field(default_factory=list)
    extra: list = field(default_factory=list)

    def append(self, iteration: int, loss: float, wall: float, extra: dict | None = None) -> None:
        if self.iterations and iteration <= self.iterations[-1]:
            raise ConfigurationError("log iterations must be strictly increasing")
        self.iterations.append(int(iteration))
        self.losses.append(float(loss))
        self.wall.append(float(wall))
        self.extra.append(dict(extra or {}))

    def loss_at(self, iteration: int) -> float:
        return self.losses[self.iterations.index(iteration)]

    def to_csv(self, path) -> None:
        keys = sorted({k for e in self.extra for k in e})
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "loss", "wall_time", *keys])
            for it, loss, wt, ex in zip(self.iterations, self.losses, self.wall, self.extra):
                w.writerow([it, repr(loss), f"{wt:.3f}", *(ex.get(k, "") for k in keys)])


class TrainingAborted(TrainingError):
    def __init__(self, message: str, last_good: Predictor, log: TrainLog):
        super().__init__(message)
        self.last_good = last_good
        self.log = log


def _streams(seed: int):
    init, data = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init), np.random.default_rng(data)


def make_predictor(prior: PriorModel, config: TrainConfig, rng: np.random.Generator) -> Predictor:
    aux = config.effective_aux
    pred = Predictor.create(rng, x_dim=prior.dim, time_dim=config.time_dim,
                            z_dim=0 if config.is_baseline else prior.z_dim,
                            aux_dim=0 if aux == "none" else prior.dim,
                            hidden=config.hidden, T=config.T,
                            meta={"mode": config.mode, "parameterization": config.parameterization,
                                  "aux": aux, "delta": config.delta, "T": config.T,
                                  "sched_sigma_min": config.sched_sigma_min,
                                  "sched_sigma_max": config.sched_sigma_max})
    pred.net = pred.net.astype(config.dtype)
    return pred


def network_inputs(pred: Predictor, prior: PriorModel, x_t, t, z, mu_hat, sigma_hat, schedule,
                   parameterization: str, aux: str, delta: float):
    """The z embedding and auxiliary block fed to the predictor for a batch."""
    z_emb = prior.z_embedding(z) if pred.z_dim else None
    if aux == "none":
        return z_emb, None
    if aux == "mu":
        return z_emb, mu_hat
    fn = D.aux_eps if parameterization == "eps" else D.aux_v
    return z_emb, fn(x_t, t, mu_hat, sigma_hat, schedule, delta)


def _train(data, prior: PriorModel, config: TrainConfig, callback=None):
    x = np.asarray(getattr(data, "points", data), dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ConfigurationError("training data must be a nonempty (N, 2) array")
    schedule = config.schedule()
    init_rng, rng = _streams(config.seed)
    pred = make_predictor(prior, config, init_rng)
    if pred.x_dim != x.shape[1]:
        raise ConfigurationError("prior dimension does not match the data")
    param = config.parameterization
    aux = config.effective_aux
    opt = AdamState(lr=config.lr)
    params = pred.net.params()
    log = TrainLog()
    last_good = pred.net.copy()
    out_dir = Path(config.out_dir) if config.out_dir else None
    n, B, T = len(x), config.batch_size, config.T
    start = time.perf_counter()
    running = 0.0
    count = 0
    for it in range(1, config.iterations + 1):
        xb = x if B >= n else x[rng.choice(n, B, replace=False)]
        b = len(xb)
        t = rng.integers(1, T + 1, size=b)
        eps0 = rng.standard_normal(xb.shape)
        z = prior.posterior_z(xb, rng)
        mu_hat, sigma_hat = prior.decode(z)
        x_t = D.forward_sample(xb, t, eps0, mu_hat, sigma_hat, schedule).x_t
        if param == "eps":
            target = eps0
        else:
            target = D.velocity_targets(xb, t, eps0, mu_hat, sigma_hat, schedule).v_hat
        z_emb, aux_in = network_inputs(pred, prior, x_t, t, z, mu_hat, sigma_hat, schedule,
                                       param, aux, config.delta)
        out = pred.net.forward(pred.build_input(x_t, t, z_emb, aux_in), record=True)
        diff = out - target.astype(out.dtype)
        loss = float(np.mean(np.sum(diff.astype(np.float64) ** 2, axis=1)))
        try:
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss} at iteration {it}")
            grads, _ = pred.net.backward(diff * (2.0 / b))
            adam_step(opt, params, grads)
        except TrainingError as exc:
            good = Predictor(last_good, pred.x_dim, pred.time_dim, pred.z_dim, pred.aux_dim,
                             pred.T, pred.meta)
            if out_dir is not None:
                out_dir.mkdir(parents=True, exist_ok=True)
                save_predictor(good, out_dir / "last_good.npz")
            raise TrainingAborted(f"{exc}; last good weights kept", good, log) from exc
        running += loss
        count += 1
        if it % config.log_every == 0 or it == config.iterations:
            extra = callback(it, pred) if callback else None
            log.append(it, running / count, time.perf_counter() - start, extra)
            running, count = 0.0, 0
            last_good = pred.net.copy()
        if out_dir is not None and config.checkpoint_every and it % config.checkpoint_every == 0:
            out_dir.mkdir(parents=True, exist_ok=True)
            save_predictor(pred, out_dir / f"ckpt_{it:07d}.npz")
    return pred, log


def train_rpd_eps(data, prior: PriorModel, config: TrainConfig, callback=None):
    """Noise-prediction RPD; returns ``(predictor, log)``."""
    if config.mode not in ("rpd-eps", "ddpm"):
        raise ConfigurationError(f"train_rpd_eps cannot run mode {config.mode!r}")
    return _train(data, prior, config, callback)


def train_rpd_v(data, prior: PriorModel, config: TrainConfig, callback=None):
    """Velocity-prediction RPD; returns ``(predictor, log)``."""
    if config.mode not in ("rpd-v", "vpred"):
        raise ConfigurationError(f"train_rpd_v cannot run mode {config.mode!r}")
    return _train(data, prior, config, callback)


def train_baseline(data, config: TrainConfig, callback=None):
    """DDPM or v-prediction: the RPD loop with the trivial prior and no extra inputs."""
    if not config.is_baseline:
        raise ConfigurationError(f"train_baseline needs mode ddpm or vpred, got {config.mode!r}")
    return _train(data, TrivialNormalPrior(), config, callback)


def train(data, prior: PriorModel | None, config: TrainConfig, callback=None):
    if config.is_baseline:
        return train_baseline(data, config, callback)
    if prior is None:
        raise ConfigurationError(f"mode {config.mode!r} needs a prior")
    fn = train_rpd_eps if config.mode == "rpd-eps" else train_rpd_v
    return fn(data, prior, config, callback)


def as_baseline_equivalent(config: TrainConfig) -> TrainConfig:
    """The RPD mode that reduces to ``config``'s baseline when paired with the trivial prior."""
    mode = {"ddpm": "rpd-eps", "vpred": "rpd-v"}.get(config.mode, config.mode)
    return replace(config, mode=mode, aux="none")
