"""Prior models supplying p(z), q(z|x0) and the Gaussian decoder statistics.

A latent ``z`` is always an integer index: the code for the VQ-VAE, the
component for the mixture, and the constant 0 for the trivial prior.
"""

from __future__ import annotations

import io
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit, logsumexp

from rpd.errors import ConfigurationError, UsageError
from rpd.nncore import MLP, AdamState, adam_step

SIGMA_FLOOR = 0.1
PRIOR_CHECKPOINT_VERSION = 1
_LOG_2PI = math.log(2.0 * math.pi)


class CollapsedCodebookWarning(UserWarning):
    pass


def _as_z(z) -> np.ndarray:
    return np.atleast_1d(np.asarray(z, dtype=np.int64))


def gaussian_logpdf(x, mu, sigma) -> np.ndarray:
    """Log density of ``N(mu, sigma^2 I_n)`` evaluated row-wise."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64), (x.shape[0],))
    n = x.shape[1]
    sq = np.sum((x - mu) ** 2, axis=-1)
    return -0.5 * sq / sigma**2 - n * np.log(sigma) - 0.5 * n * _LOG_2PI


class PriorModel:
    """Interface shared by every prior.

    ``c`` arguments are class-conditioning hooks; the 2D models ignore them.
    """

    dim: int = 2
    z_dim: int = 0
    n_latent: int = 1

    def sample_z(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def posterior_z(self, x0, rng: np.random.Generator | None = None, c=None) -> np.ndarray:
        raise NotImplementedError

    def decode_mu(self, z, c=None) -> np.ndarray:
        raise NotImplementedError

    def decode_sigma(self, z, c=None) -> np.ndarray:
        raise NotImplementedError

    def decode(self, z, c=None):
        return self.decode_mu(z, c), self.decode_sigma(z, c)

    def z_embedding(self, z) -> np.ndarray:
        return np.zeros((len(_as_z(z)), 0))

    def log_prior_z(self, z) -> np.ndarray:
        raise NotImplementedError

    def reconstruction_term(self, x0, z) -> np.ndarray:
        """``log p(x0 | z)`` under the Gaussian decoder."""
        mu, sigma = self.decode(z)
        return gaussian_logpdf(x0, mu, sigma)

    def prior_elbo(self, x0, rng: np.random.Generator | None = None) -> np.ndarray:
        """Per-point reconstruction term minus ``KL(q(z|x0) || p(z))`` for a point-mass posterior."""
        z = self.posterior_z(x0, rng)
        return self.reconstruction_term(x0, z) + self.log_prior_z(z)


class TrivialNormalPrior(PriorModel):
    """Single latent with ``mu = 0`` and ``sigma = 1``: turns RPD into plain diffusion."""

    kind = "trivial"

    def __init__(self, dim: int = 2):
        self.dim = dim

    def sample_z(self, rng, size):
        return np.zeros(size, dtype=np.int64)

    def posterior_z(self, x0, rng=None, c=None):
        return np.zeros(len(np.atleast_2d(x0)), dtype=np.int64)

    def decode_mu(self, z, c=None):
        return np.zeros((len(_as_z(z)), self.dim))

    def decode_sigma(self, z, c=None):
        return np.ones(len(_as_z(z)))

    def log_prior_z(self, z):
        return np.zeros(len(_as_z(z)))


class AnalyticMixturePrior(PriorModel):
    """Gaussian mixture with exact responsibilities as the posterior."""

    kind = "mixture"

    def __init__(self, weights, means, sigmas):
        w = np.asarray(weights, dtype=np.float64)
        m = np.atleast_2d(np.asarray(means, dtype=np.float64))
        s = np.broadcast_to(np.asarray(sigmas, dtype=np.float64), w.shape).copy()
        if w.ndim != 1 or len(w) != len(m):
            raise ConfigurationError("need one mean per mixture weight")
        if np.any(w < 0) or not math.isclose(w.sum(), 1.0, rel_tol=0, abs_tol=1e-12):
            raise ConfigurationError("mixture weights must be nonnegative and sum to 1")
        if np.any(s <= 0):
            raise ConfigurationError("mixture deviations must be positive")
        self.weights, self.means, self.sigmas = w, m, s
        self.dim = m.shape[1]
        self.z_dim = self.dim
        self.n_latent = len(w)

    def sample_z(self, rng, size):
        return rng.choice(self.n_latent, size=size, p=self.weights)

    def responsibilities(self, x0) -> np.ndarray:
        x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        logp = np.stack([gaussian_logpdf(x0, self.means[k], self.sigmas[k])
                         for k in range(self.n_latent)], axis=1) + logw
        return np.exp(logp - logsumexp(logp, axis=1, keepdims=True))

    def posterior_z(self, x0, rng=None, c=None):
        """Sample from the responsibilities, or take the most responsible component if ``rng`` is None."""
        r = self.responsibilities(x0)
        if rng is None:
            return np.argmax(r, axis=1)
        u = rng.uniform(size=(len(r), 1))
        return np.minimum(np.sum(np.cumsum(r, axis=1) < u, axis=1), self.n_latent - 1)

    def decode_mu(self, z, c=None):
        return self.means[_as_z(z)]

    def decode_sigma(self, z, c=None):
        return self.sigmas[_as_z(z)]

    def z_embedding(self, z):
        return self.means[_as_z(z)]

    def log_prior_z(self, z):
        with np.errstate(divide="ignore"):
            return np.log(self.weights[_as_z(z)])

    def log_marginal(self, x0) -> np.ndarray:
        x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        logp = np.stack([gaussian_logpdf(x0, self.means[k], self.sigmas[k])
                         for k in range(self.n_latent)], axis=1) + logw
        return logsumexp(logp, axis=1)


def softplus(x):
    return np.logaddexp(0.0, x)


def softplus_inv(y: float) -> float:
    return float(y + np.log(-np.expm1(-y)))


def kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding (D^2 sampling) of ``k`` centres from ``points``."""
    n = len(points)
    centres = [points[rng.integers(n)]]
    d2 = np.sum((points - centres[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        idx = rng.integers(n) if total <= 0 else rng.choice(n, p=d2 / total)
        centres.append(points[idx])
        d2 = np.minimum(d2, np.sum((points - points[idx]) ** 2, axis=1))
    return np.array(centres)


@dataclass
class VqVaeConfig:
    codebook_size: int = 16
    code_dim: int = 2
    hidden: tuple = (16, 32, 16)
    lr: float = 1e-3
    decay: float = 0.99
    commitment: float = 0.25
    # steps with sigma held at 1.0; None means the first two thirds of training
    freeze_steps: int | None = None
    batch_size: int | None = None
    ema_eps: float = 1e-5
    # codes whose EMA size falls below this are re-seeded from the batch
    dead_threshold: float = 0.01


class VqVaePrior(PriorModel):
    """2D VQ-VAE with an EMA codebook and a shared, floored decoder deviation."""

    kind = "vqvae"

    def __init__(self, encoder: MLP, decoder: MLP, codebook, ema_size=None, ema_sum=None,
                 rho: float = 0.0, sigma_frozen: bool = True, usage=None,
                 config: VqVaeConfig | None = None):
        self.config = config or VqVaeConfig()
        self.encoder, self.decoder = encoder, decoder
        self.codebook = np.asarray(codebook, dtype=np.float64)
        K, d = self.codebook.shape
        if encoder.out_dim != d or decoder.in_dim != d:
            raise ConfigurationError("codebook width must match encoder output and decoder input")
        self.ema_size = np.ones(K) if ema_size is None else np.asarray(ema_size, dtype=np.float64)
        self.ema_sum = self.codebook.copy() if ema_sum is None else np.asarray(ema_sum, dtype=np.float64)
        self.rho = np.array(float(rho))
        self.sigma_frozen = bool(sigma_frozen)
        self.usage = np.full(K, 1.0 / K) if usage is None else np.asarray(usage, dtype=np.float64)
        self.dim = decoder.out_dim
        self.z_dim = d
        self.n_latent = K

    @property
    def sigma(self) -> float:
        if self.sigma_frozen:
            return 1.0
        return float(SIGMA_FLOOR + softplus(self.rho))

    def encode(self, x0, record: bool = False) -> np.ndarray:
        return self.encoder.forward(np.atleast_2d(np.asarray(x0, dtype=np.float64)), record=record)

    def quantize(self, ze: np.ndarray) -> np.ndarray:
        d2 = np.sum((ze[:, None, :] - self.codebook[None, :, :]) ** 2, axis=-1)
        return np.argmin(d2, axis=1)

    def sample_z(self, rng, size):
        return rng.choice(self.n_latent, size=size, p=self.usage)

    def posterior_z(self, x0, rng=None, c=None):
        return self.quantize(self.encode(x0))

    def decode_mu(self, z, c=None):
        return self.decoder.forward(self.codebook[_as_z(z)], record=False)

    def decode_sigma(self, z, c=None):
        return np.full(len(_as_z(z)), self.sigma)

    def z_embedding(self, z):
        return self.codebook[_as_z(z)]

    def log_prior_z(self, z):
        with np.errstate(divide="ignore"):
            return np.log(self.usage[_as_z(z)])

    def ema_update(self, ze: np.ndarray, idx: np.ndarray) -> None:
        K = self.n_latent
        decay = self.config.decay
        counts = np.bincount(idx, minlength=K).astype(np.float64)
        sums = np.zeros_like(self.ema_sum)
        np.add.at(sums, idx, ze)
        self.ema_size = decay * self.ema_size + (1.0 - decay) * counts
        self.ema_sum = decay * self.ema_sum + (1.0 - decay) * sums
        live = self.ema_size > self.config.ema_eps
        self.codebook[live] = self.ema_sum[live] / self.ema_size[live, None]

    def restart_dead(self, ze: np.ndarray, rng: np.random.Generator) -> int:
        """Move dead codes onto batch encodings drawn by D^2 sampling; returns how many moved."""
        dead = np.flatnonzero(self.ema_size < self.config.dead_threshold)
        for k in dead:
            d2 = np.min(np.sum((ze[:, None, :] - self.codebook[None]) ** 2, axis=-1), axis=1)
            total = d2.sum()
            i = rng.integers(len(ze)) if total <= 0 else rng.choice(len(ze), p=d2 / total)
            self.codebook[k] = ze[i]
            self.ema_size[k] = 1.0
            self.ema_sum[k] = ze[i]
        return len(dead)

    def record_usage(self, data) -> None:
        z = self.posterior_z(data)
        self.usage = np.bincount(z, minlength=self.n_latent) / len(z)


@dataclass
class VqVaeLog:
    steps: list = field(default_factory=list)
    recon: list = field(default_factory=list)
    commit: list = field(default_factory=list)
    sigma: list = field(default_factory=list)


def vqvae_train(data, steps: int, seed: int = 0, config: VqVaeConfig | None = None,
                log: VqVaeLog | None = None, log_every: int = 100) -> VqVaePrior:
    """Fit a :class:`VqVaePrior` to ``data`` (``(N, 2)`` array or PointSet2D).

    The codebook is seeded by k-means++ on the initial encodings, then tracked
    by EMA; encoder and decoder are trained with Adam through a
    straight-through estimator. ``sigma`` stays at 1 for ``freeze_steps``.
    """
    cfg = config or VqVaeConfig()
    x = np.asarray(getattr(data, "points", data), dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ConfigurationError("vqvae_train needs a nonempty (N, d) dataset")
    if steps < 0:
        raise ConfigurationError("steps must be nonnegative")
    rng = np.random.default_rng(seed)
    dim = x.shape[1]
    K, d = cfg.codebook_size, cfg.code_dim
    enc = MLP.init([dim, *cfg.hidden, d], rng)
    dec = MLP.init([d, *cfg.hidden, dim], rng)
    codebook = kmeans_pp(enc.forward(x, record=False), K, rng)
    prior = VqVaePrior(enc, dec, codebook, config=cfg)

    if np.all(np.ptp(x, axis=0) == 0):
        warnings.warn("all training points are identical; the codebook collapses to one code",
                      CollapsedCodebookWarning, stacklevel=2)

    freeze = int(round(2 * steps / 3)) if cfg.freeze_steps is None else cfg.freeze_steps
    opt = AdamState(lr=cfg.lr)
    opt_rho = AdamState(lr=cfg.lr)
    params = enc.params() + dec.params()
    beta_c = cfg.commitment
    for step in range(steps):
        if step == freeze:
            prior.sigma_frozen = False
            prior.rho[...] = softplus_inv(1.0 - SIGMA_FLOOR)
        if cfg.batch_size is None or cfg.batch_size >= len(x):
            xb = x
        else:
            xb = x[rng.integers(len(x), size=cfg.batch_size)]
        B = len(xb)
        ze = enc.forward(xb, record=True)
        idx = prior.quantize(ze)
        e = prior.codebook[idx]
        mu = dec.forward(e, record=True)
        sigma = prior.sigma
        r = xb - mu
        sq = np.sum(r * r, axis=1)
        grads_dec, g_e = dec.backward(-r / (sigma**2 * B))
        g_ze = g_e + 2.0 * beta_c * (ze - e) / B
        grads_enc, _ = enc.backward(g_ze)
        adam_step(opt, params, grads_enc + grads_dec)
        if not prior.sigma_frozen:
            g_sigma = np.mean(-sq / sigma**3) + dim / sigma
            adam_step(opt_rho, [prior.rho], [np.asarray(g_sigma * expit(prior.rho))])
        prior.ema_update(ze, idx)
        prior.restart_dead(ze, rng)
        if log is not None and (step % log_every == 0 or step == steps - 1):
            log.steps.append(step)
            log.recon.append(float(np.mean(sq) / (2 * sigma**2) + dim * math.log(sigma)))
            log.commit.append(float(beta_c * np.mean(np.sum((ze - e) ** 2, axis=1))))
            log.sigma.append(sigma)

    prior.record_usage(x)
    if np.count_nonzero(prior.usage) == 1 and len(np.unique(x, axis=0)) > 1:
        warnings.warn("only one code is in use after training", CollapsedCodebookWarning, stacklevel=2)
    return prior


def save_prior(prior: PriorModel, path) -> None:
    """Write a prior as ``.npz``.

    Common keys: ``version``, ``kind``. VQ-VAE adds ``codebook`` (K x d),
    ``enc_W{i}``/``enc_b{i}``, ``dec_W{i}``/``dec_b{i}``, ``ema_size``,
    ``ema_sum``, ``rho`` (raw sigma parameter), ``sigma_frozen``, ``usage`` and
    ``config`` (JSON). Mixture adds ``weights``, ``means``, ``sigmas``.
    """
    arrays = {"version": np.array(PRIOR_CHECKPOINT_VERSION), "kind": np.array(prior.kind)}
    if isinstance(prior, TrivialNormalPrior):
        arrays["dim"] = np.array(prior.dim)
    elif isinstance(prior, AnalyticMixturePrior):
        arrays.update(weights=prior.weights, means=prior.means, sigmas=prior.sigmas)
    elif isinstance(prior, VqVaePrior):
        for tag, net in (("enc", prior.encoder), ("dec", prior.decoder)):
            arrays[f"{tag}_widths"] = np.array(net.widths)
            for i, (w, b) in enumerate(zip(net.weights, net.biases)):
                arrays[f"{tag}_W{i}"] = w
                arrays[f"{tag}_b{i}"] = b
        cfg = dict(vars(prior.config))
        cfg["hidden"] = list(cfg["hidden"])
        arrays.update(codebook=prior.codebook, ema_size=prior.ema_size, ema_sum=prior.ema_sum,
                      rho=prior.rho, sigma_frozen=np.array(prior.sigma_frozen), usage=prior.usage,
                      config=np.array(json.dumps(cfg)))
    else:
        raise ConfigurationError(f"cannot save prior of type {type(prior).__name__}")
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_prior(path) -> PriorModel:
    with np.load(path, allow_pickle=False) as z:
        if int(z["version"]) != PRIOR_CHECKPOINT_VERSION:
            raise ConfigurationError(f"unsupported prior checkpoint version {int(z['version'])}")
        kind = str(z["kind"])
        if kind == "trivial":
            return TrivialNormalPrior(int(z["dim"]))
        if kind == "mixture":
            return AnalyticMixturePrior(z["weights"], z["means"], z["sigmas"])
        if kind == "vqvae":
            nets = []
            for tag in ("enc", "dec"):
                widths = [int(w) for w in z[f"{tag}_widths"]]
                n = len(widths) - 1
                nets.append(MLP(widths, [z[f"{tag}_W{i}"] for i in range(n)],
                                [z[f"{tag}_b{i}"] for i in range(n)]))
            cfg = json.loads(str(z["config"]))
            cfg["hidden"] = tuple(cfg["hidden"])
            return VqVaePrior(nets[0], nets[1], z["codebook"], z["ema_size"], z["ema_sum"],
                              float(z["rho"]), bool(z["sigma_frozen"]), z["usage"], VqVaeConfig(**cfg))
    raise UsageError(f"unknown prior kind {kind!r}")
