"""Independent reference computations used to check the main implementation.

Nothing here imports :mod:`rpd.diffusion` or :mod:`rpd.metrics`; each routine
computes its answer by a different route (textbook formulas, step-by-step
composition, numerical quadrature, exhaustive search, finite differences).
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import minimize_scalar


class DDPMReference:
    """Textbook DDPM written directly from ``betas`` (1-indexed, ``betas[0]`` unused)."""

    def __init__(self, betas):
        self.betas = np.asarray(betas, dtype=np.float64)
        self.alphas = 1.0 - self.betas
        self.alphas[0] = 1.0
        self.alphas_cumprod = np.cumprod(self.alphas)

    def q_sample(self, x0, t, noise):
        abar = self.alphas_cumprod[t]
        if np.ndim(t):
            abar = abar[:, None]
        return np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * noise

    def q_posterior(self, x_t, x0, t):
        abar, abar_prev = self.alphas_cumprod[t], self.alphas_cumprod[t - 1]
        alpha, beta = self.alphas[t], self.betas[t]
        if np.ndim(t):
            abar, abar_prev, alpha, beta = (v[:, None] for v in (abar, abar_prev, alpha, beta))
        coef_xt = np.sqrt(alpha) * (1.0 - abar_prev) / (1.0 - abar)
        coef_x0 = beta * np.sqrt(abar_prev) / (1.0 - abar)
        mean = coef_xt * x_t + coef_x0 * x0
        var = beta * (1.0 - abar_prev) / (1.0 - abar)
        return mean, var

    def p_mean_eps(self, x_t, eps, t):
        abar, alpha, beta = self.alphas_cumprod[t], self.alphas[t], self.betas[t]
        if np.ndim(t):
            abar, alpha, beta = (v[:, None] for v in (abar, alpha, beta))
        return (x_t - beta / np.sqrt(1.0 - abar) * eps) / np.sqrt(alpha)

    def p_sigma(self, t, sigma_min):
        abar, abar_prev, beta = self.alphas_cumprod[t], self.alphas_cumprod[t - 1], self.betas[t]
        var = beta * (1.0 - abar_prev) / np.where(t == 1, 1.0, 1.0 - abar)
        s = np.where(t == 1, sigma_min, np.sqrt(var))
        return s[:, None] if np.ndim(t) else s

    def p_step(self, x_t, eps, t, noise, sigma_min):
        return self.p_mean_eps(x_t, eps, t) + self.p_sigma(t, sigma_min) * noise


def composed_marginals(betas, mu_hat, sigma_hat, x0):
    """Mean and variance of ``x_t | x0`` for every ``t`` by composing single steps.

    Each step is ``x_t = sqrt(a_t) x_{t-1} + (1 - sqrt(a_t)) mu_hat + sqrt(b_t) sigma_hat e``;
    returns arrays indexed ``0..T`` (means have shape ``(T+1, n)``).
    """
    betas = np.asarray(betas, dtype=np.float64)
    mu_hat = np.asarray(mu_hat, dtype=np.float64)
    mean = np.asarray(x0, dtype=np.float64).copy()
    var = 0.0
    means, variances = [mean.copy()], [var]
    for b in betas[1:]:
        a = 1.0 - b
        mean = math.sqrt(a) * mean + (1.0 - math.sqrt(a)) * mu_hat
        var = a * var + b * sigma_hat**2
        means.append(mean.copy())
        variances.append(var)
    return np.array(means), np.array(variances)


def posterior_by_quadrature(x_t: float, x0: float, t: int, betas, mu_hat: float, sigma_hat: float,
                            n_grid: int = 4001, width: float = 14.0):
    """Mean and variance of ``x_{t-1} | x_t, x0`` in 1D from the normalised product density.

    The product ``q(x_{t-1} | x0) q(x_t | x_{t-1})`` is located with a scalar
    optimiser, its spread read off a finite-difference curvature, and the
    moments integrated with Simpson's rule on a dense window.
    """
    betas = np.asarray(betas, dtype=np.float64)
    alphas = 1.0 - betas[1:]
    abar_prev = float(np.prod(alphas[: t - 1]))
    a_t, b_t = float(alphas[t - 1]), float(betas[t])
    m_prev = math.sqrt(abar_prev) * x0 + (1.0 - math.sqrt(abar_prev)) * mu_hat
    v_prev = (1.0 - abar_prev) * sigma_hat**2

    def neg_log(y):
        step_mean = math.sqrt(a_t) * y + (1.0 - math.sqrt(a_t)) * mu_hat
        return 0.5 * (y - m_prev) ** 2 / v_prev + 0.5 * (x_t - step_mean) ** 2 / (b_t * sigma_hat**2)

    scale = math.sqrt(min(v_prev, b_t * sigma_hat**2 / a_t))
    res = minimize_scalar(neg_log, bracket=(m_prev - scale, m_prev + scale),
                          options={"xtol": 1e-14, "maxiter": 1000})
    mode = float(res.x)
    h = 1e-3 * scale
    curv = (neg_log(mode + h) - 2 * neg_log(mode) + neg_log(mode - h)) / h**2
    spread = 1.0 / math.sqrt(curv)
    grid = np.linspace(mode - width * spread, mode + width * spread, n_grid)
    logd = -np.array([neg_log(y) for y in grid])
    dens = np.exp(logd - logd.max())
    z = simpson(dens, x=grid)
    mean = simpson(grid * dens, x=grid) / z
    var = simpson((grid - mean) ** 2 * dens, x=grid) / z
    return mean, var


def w1_bruteforce(a, b) -> float:
    """Minimum mean matched distance over all permutations (equal sizes only)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) != len(b):
        raise ValueError("brute-force W1 needs equal sizes")
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    idx = np.arange(len(a))
    return min(float(d[idx, list(p)].mean()) for p in itertools.permutations(idx))


def kl_diag_gaussians(m1, v1, m2, v2) -> float:
    """``KL(N(m1, diag v1) || N(m2, diag v2))`` summed coordinate-wise."""
    m1, v1, m2, v2 = (np.broadcast_to(np.asarray(u, dtype=np.float64), np.shape(m1)) for u in (m1, v1, m2, v2))
    return float(np.sum(0.5 * (np.log(v2 / v1) + (v1 + (m1 - m2) ** 2) / v2 - 1.0)))


def finite_difference_grads(loss_fn, params, h: float = 1e-6):
    """Central differences of ``loss_fn()`` with respect to every entry of ``params`` (mutated in place)."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            up = loss_fn()
            p[i] = old - h
            down = loss_fn()
            p[i] = old
            g[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads
