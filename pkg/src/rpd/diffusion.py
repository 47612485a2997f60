"""Closed-form residual-prior diffusion formulas.

All functions are pure. Shapes: points are ``(n,)`` or ``(B, n)``; ``mu_hat``
broadcasts against them; ``sigma_hat`` is a scalar or a ``(B,)`` vector; ``t``
is an int or a ``(B,)`` int array of positions in ``schedule`` (a
:class:`~rpd.schedule.Schedule` or :class:`~rpd.schedule.ReducedSchedule`).

Expressions are arranged so that with ``mu_hat = 0`` and ``sigma_hat = 1`` each
one collapses term by term onto the textbook DDPM formula (adding an exact
zero, multiplying by an exact one).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rpd.errors import ConfigurationError

DEFAULT_DELTA = 0.01
DEFAULT_SIGMA_MIN = 1e-3


@dataclass(frozen=True)
class _Coef:
    alpha: np.ndarray
    beta: np.ndarray
    abar: np.ndarray
    abar_prev: np.ndarray


def _coef(schedule, t, t_min: int = 0) -> _Coef:
    t = np.asarray(t)
    if not np.issubdtype(t.dtype, np.integer):
        raise ConfigurationError("time steps must be integers")
    if np.any(t < t_min) or np.any(t > schedule.n_steps):
        raise ConfigurationError(f"time step out of range [{t_min}, {schedule.n_steps}]")
    prev = np.maximum(t - 1, 0)
    vals = [schedule.alphas[t], schedule.betas[t], schedule.alpha_bars[t], schedule.alpha_bars[prev]]
    if t.ndim == 1:
        vals = [v[:, None] for v in vals]
    return _Coef(*vals)


def _sig(sigma_hat):
    s = np.asarray(sigma_hat, dtype=np.float64)
    return s[:, None] if s.ndim == 1 else s


@dataclass(frozen=True)
class ForwardDraw:
    t: object
    x_t: np.ndarray
    eps0: np.ndarray
    mu_hat: np.ndarray
    sigma_hat: object
    z: object = None


@dataclass(frozen=True)
class PosteriorParams:
    mu_tilde: np.ndarray
    beta_tilde: np.ndarray
    nu: np.ndarray

    @property
    def sigma(self):
        return np.sqrt(self.beta_tilde)


@dataclass(frozen=True)
class VelocityTargets:
    v: np.ndarray
    v_hat: np.ndarray
    w: np.ndarray


def forward_sample(x0, t, eps0, mu_hat, sigma_hat, schedule, z=None) -> ForwardDraw:
    """Draw ``x_t`` from ``q(x_t | x0, z)`` using caller-supplied noise ``eps0``."""
    c = _coef(schedule, t)
    x0 = np.asarray(x0, dtype=np.float64)
    eps0 = np.asarray(eps0, dtype=np.float64)
    mu = np.asarray(mu_hat, dtype=np.float64)
    sab = np.sqrt(c.abar)
    x_t = sab * x0 + (1.0 - sab) * mu + (np.sqrt(1.0 - c.abar) * _sig(sigma_hat)) * eps0
    return ForwardDraw(t, x_t, eps0, mu, sigma_hat, z)


def marginal_params(x0, t, mu_hat, sigma_hat, schedule):
    """Mean and isotropic variance of ``q(x_t | x0, z)``."""
    c = _coef(schedule, t)
    sab = np.sqrt(c.abar)
    mean = sab * np.asarray(x0, dtype=np.float64) + (1.0 - sab) * np.asarray(mu_hat, dtype=np.float64)
    var = (1.0 - c.abar) * _sig(sigma_hat) ** 2
    return mean, var


def posterior_coefficients(t, schedule):
    """Weights ``(c_xt, c_x0, nu)`` of ``mu_tilde = c_xt x_t + c_x0 x0 + nu mu_hat``."""
    c = _coef(schedule, t, t_min=2)
    denom = 1.0 - c.abar
    c_xt = np.sqrt(c.alpha) * (1.0 - c.abar_prev) / denom
    c_x0 = c.beta * np.sqrt(c.abar_prev) / denom
    nu = (1.0 - np.sqrt(c.alpha)) * (1.0 - np.sqrt(c.abar_prev)) / (1.0 + np.sqrt(c.abar))
    return c_xt, c_x0, nu


def posterior_params(x_t, x0, t, mu_hat, sigma_hat, schedule) -> PosteriorParams:
    """Mean and variance of ``q(x_{t-1} | x_t, x0, z)`` for ``t >= 2``.

    ``t = 1`` has no posterior; the reverse step uses ``sigma_min`` there.
    """
    c = _coef(schedule, t, t_min=2)
    c_xt, c_x0, nu = posterior_coefficients(t, schedule)
    mu = np.asarray(mu_hat, dtype=np.float64)
    mu_tilde = c_xt * np.asarray(x_t, dtype=np.float64) + c_x0 * np.asarray(x0, dtype=np.float64) + nu * mu
    beta_tilde = c.beta * (1.0 - c.abar_prev) / (1.0 - c.abar) * _sig(sigma_hat) ** 2
    return PosteriorParams(mu_tilde, beta_tilde, nu)


def _first_step_mask(t):
    t = np.asarray(t)
    return t == 1 if t.ndim == 0 else (t == 1)[:, None]


def reverse_sigma(t, sigma_hat, schedule, sigma_min: float = DEFAULT_SIGMA_MIN):
    """Standard deviation of ``p_theta(x_{t-1} | x_t, z)``; ``sigma_min`` at ``t = 1``."""
    c = _coef(schedule, t, t_min=1)
    beta_tilde = c.beta * (1.0 - c.abar_prev) / (1.0 - c.abar) * _sig(sigma_hat) ** 2
    return np.where(_first_step_mask(t), sigma_min, np.sqrt(beta_tilde))


def mu_from_eps(x_t, eps_pred, t, mu_hat, sigma_hat, schedule):
    """Reverse mean parameterised by a noise estimate."""
    c = _coef(schedule, t, t_min=1)
    sa = np.sqrt(c.alpha)
    mu = np.asarray(mu_hat, dtype=np.float64)
    noise_coef = c.beta / np.sqrt(1.0 - c.abar) * _sig(sigma_hat)
    return (np.asarray(x_t, dtype=np.float64) - (1.0 - sa) * mu - noise_coef * eps_pred) / sa


def mu_from_v(x_t, v_pred, t, mu_hat, sigma_hat, schedule):
    """Reverse mean parameterised by a modified-velocity estimate."""
    c = _coef(schedule, t, t_min=1)
    sa = np.sqrt(c.alpha)
    mu = np.asarray(mu_hat, dtype=np.float64)
    v_coef = c.beta * np.sqrt(c.abar_prev) / np.sqrt(1.0 - c.abar) * _sig(sigma_hat)
    return sa * np.asarray(x_t, dtype=np.float64) + (1.0 - sa) * mu - v_coef * v_pred


def aux_eps(x_t, t, mu_hat, sigma_hat, schedule, delta: float = DEFAULT_DELTA):
    """Prior-normalised state used as an extra input for noise prediction."""
    c = _coef(schedule, t, t_min=1)
    resid = np.asarray(x_t, dtype=np.float64) - np.asarray(mu_hat, dtype=np.float64)
    return resid / ((np.sqrt(1.0 - c.abar) + delta) * _sig(sigma_hat))


def aux_v(x_t, t, mu_hat, sigma_hat, schedule, delta: float = DEFAULT_DELTA):
    """Prior-normalised state used as an extra input for velocity prediction."""
    c = _coef(schedule, t, t_min=1)
    resid = np.asarray(x_t, dtype=np.float64) - np.asarray(mu_hat, dtype=np.float64)
    return np.sqrt(c.abar) * resid / ((np.sqrt(1.0 - c.abar) + delta) * _sig(sigma_hat))


def velocity_targets(x0, t, eps0, mu_hat, sigma_hat, schedule) -> VelocityTargets:
    """Velocity ``dx_t/dw_t`` (``w_t = sqrt(abar_t)``) and its prior-normalised form."""
    c = _coef(schedule, t, t_min=1)
    w = np.sqrt(c.abar)
    s = _sig(sigma_hat)
    resid = np.asarray(x0, dtype=np.float64) - np.asarray(mu_hat, dtype=np.float64)
    eps0 = np.asarray(eps0, dtype=np.float64)
    v = resid - w / np.sqrt(1.0 - c.abar) * s * eps0
    v_hat = w * eps0 - np.sqrt(1.0 - c.abar) * (resid / s)
    return VelocityTargets(v, v_hat, w)


def x0_from_velocity(x_t, v, t, mu_hat, schedule):
    c = _coef(schedule, t, t_min=1)
    sab = np.sqrt(c.abar)
    return (1.0 - c.abar) * v + sab * np.asarray(x_t, dtype=np.float64) + (1.0 - sab) * np.asarray(mu_hat)


def mu_tilde_from_velocity(x_t, v, t, mu_hat, schedule):
    """Posterior mean written through the (unnormalised) velocity."""
    c = _coef(schedule, t, t_min=2)
    sa = np.sqrt(c.alpha)
    return sa * np.asarray(x_t, dtype=np.float64) + (1.0 - sa) * np.asarray(mu_hat) + \
        c.beta * np.sqrt(c.abar_prev) * v


def eps_from_v_hat(x_t, v_hat, t, mu_hat, sigma_hat, schedule):
    """Noise implied by a modified velocity at the same ``x_t``."""
    c = _coef(schedule, t, t_min=1)
    y_t = (np.asarray(x_t, dtype=np.float64) - np.asarray(mu_hat)) / _sig(sigma_hat)
    # y_t = w y0 + s eps and v_hat = w eps - s y0 with w^2 + s^2 = 1
    return np.sqrt(1.0 - c.abar) * y_t + np.sqrt(c.abar) * v_hat


def residual_coords(x_t, mu_hat, sigma_hat):
    return (np.asarray(x_t, dtype=np.float64) - np.asarray(mu_hat)) / _sig(sigma_hat)


def _sqnorm(a):
    a = np.asarray(a, dtype=np.float64)
    return np.sum(a * a, axis=-1)


def loss_simple_eps(eps0, eps_pred) -> float:
    return float(np.mean(_sqnorm(np.asarray(eps0) - np.asarray(eps_pred))))


def loss_simple_v(v_hat, v_pred) -> float:
    return float(np.mean(_sqnorm(np.asarray(v_hat) - np.asarray(v_pred))))


def eps_loss_weight(t, sigma_hat, schedule, sigma_min: float = DEFAULT_SIGMA_MIN):
    """ELBO weight on ``||eps0 - eps_theta||^2``; the ``t = 1`` weight uses ``sigma_min``."""
    c = _coef(schedule, t, t_min=1)
    s2 = _sig(sigma_hat) ** 2
    # the t >= 2 formula divides by beta_tilde, which vanishes at t = 1
    one = _first_step_mask(t)
    beta_tilde = np.where(one, 1.0, c.beta * (1.0 - c.abar_prev) / (1.0 - c.abar) * s2)
    general = c.beta**2 * s2 / (2.0 * beta_tilde * c.alpha * (1.0 - c.abar))
    first = c.beta * s2 / (2.0 * sigma_min**2 * c.alpha)
    w = np.where(one, first, general)
    return w[..., 0] if w.ndim == 2 else w


def loss_weighted_eps(eps0, eps_pred, t, sigma_hat, schedule,
                      sigma_min: float = DEFAULT_SIGMA_MIN) -> float:
    w = eps_loss_weight(t, sigma_hat, schedule, sigma_min)
    return float(np.mean(w * _sqnorm(np.asarray(eps0) - np.asarray(eps_pred))))


def rpd_reverse_step(x_t, t, model_out, mu_hat, sigma_hat, schedule, noise,
                     mode: str = "eps", sigma_min: float = DEFAULT_SIGMA_MIN):
    """One ancestral step ``x_t -> x_{t-1}`` given the network output."""
    if mode == "eps":
        mean = mu_from_eps(x_t, model_out, t, mu_hat, sigma_hat, schedule)
    elif mode == "v":
        mean = mu_from_v(x_t, model_out, t, mu_hat, sigma_hat, schedule)
    else:
        raise ConfigurationError(f"unknown parameterisation {mode!r}")
    return mean + reverse_sigma(t, sigma_hat, schedule, sigma_min) * np.asarray(noise)


def kl_gaussians_isotropic(m1, s1, m2, s2, n: int) -> float:
    """``KL(N(m1, s1^2 I_n) || N(m2, s2^2 I_n))``."""
    if s1 <= 0 or s2 <= 0:
        raise ConfigurationError("standard deviations must be positive")
    d2 = float(_sqnorm(np.asarray(m1, dtype=np.float64) - np.asarray(m2, dtype=np.float64)))
    return n * np.log(s2 / s1) + (n * s1**2 + d2) / (2.0 * s2**2) - n / 2.0
