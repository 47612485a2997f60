"""Noise schedules and reduced-step subsequences.

Arrays are stored 1-indexed by padding index 0 with the ``alpha_bar_0 = 1``
convention, so ``alpha_bars[t]`` is the cumulative product up to step ``t``.
``alphas[0]``/``betas[0]`` are placeholders (1 and 0) and never used.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from rpd.errors import ConfigurationError


@dataclass(frozen=True)
class Schedule:
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def T(self) -> int:
        return len(self.betas) - 1

    @property
    def n_steps(self) -> int:
        return self.T

    @property
    def timesteps(self) -> np.ndarray:
        """Network time index for each position (identity for a full schedule)."""
        return np.arange(self.T + 1)

    @classmethod
    def from_betas(cls, betas) -> Schedule:
        betas = np.asarray(betas, dtype=np.float64)
        if betas.ndim != 1 or len(betas) < 1:
            raise ConfigurationError("betas must be a non-empty 1D array")
        if np.any(betas <= 0) or np.any(betas >= 1):
            raise ConfigurationError("every beta_t must lie in (0, 1)")
        b = np.concatenate([[0.0], betas])
        a = 1.0 - b
        abar = np.cumprod(a)
        for arr in (b, a, abar):
            arr.setflags(write=False)
        return cls(b, a, abar)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "beta", "alpha", "alpha_bar"])
            for t in range(1, self.T + 1):
                w.writerow([t, repr(float(self.betas[t])), repr(float(self.alphas[t])),
                            repr(float(self.alpha_bars[t]))])


def make_log_linear(T: int = 200, sigma_min: float = 0.01, sigma_max: float = 100.0) -> Schedule:
    """Noise levels log-spaced on ``[sigma_min, sigma_max]``, mapped by ``abar = 1/(1+sigma^2)``."""
    if T < 2:
        raise ConfigurationError("T must be at least 2")
    if not (0 < sigma_min < sigma_max):
        raise ConfigurationError("need 0 < sigma_min < sigma_max")
    sigmas = np.exp(np.linspace(np.log(sigma_min), np.log(sigma_max), T))
    target = np.concatenate([[1.0], 1.0 / (1.0 + sigmas**2)])
    betas = 1.0 - target[1:] / target[:-1]
    return Schedule.from_betas(betas)


def log_linear_sigmas(T: int, sigma_min: float, sigma_max: float) -> np.ndarray:
    return np.exp(np.linspace(np.log(sigma_min), np.log(sigma_max), T))


def make_linear_T1000(beta_start: float = 0.00085, beta_end: float = 0.012) -> Schedule:
    """Scaled-linear betas over 1000 steps (the Stable Diffusion v1 recipe)."""
    betas = np.linspace(beta_start**0.5, beta_end**0.5, 1000) ** 2
    return Schedule.from_betas(betas)


@dataclass(frozen=True)
class ReducedSchedule:
    """Subsequence ``tau_1=1 < ... < tau_S=T`` of a parent schedule.

    Exposes the same array interface as :class:`Schedule` over positions
    ``s = 0..S`` so the diffusion formulas apply unchanged; ``timesteps[s]``
    gives the parent step ``tau_s`` fed to the network.
    """

    parent: Schedule
    timesteps: np.ndarray
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def T(self) -> int:
        return len(self.timesteps) - 1

    @property
    def n_steps(self) -> int:
        return self.T


def even_indices(T: int, S: int) -> np.ndarray:
    tau = np.unique(np.rint(np.linspace(1, T, S)).astype(int))
    tau[0], tau[-1] = 1, T
    return tau


def quadratic_indices(T: int, S: int) -> np.ndarray:
    tau = np.unique(np.rint(1 + (T - 1) * np.linspace(0, 1, S) ** 2).astype(int))
    tau[0], tau[-1] = 1, T
    return tau


def reduce(schedule: Schedule, S: int, spacing: str = "even") -> ReducedSchedule:
    """Keep ``S`` steps of ``schedule`` with effective ``alpha'_s = abar[tau_s]/abar[tau_{s-1}]``.

    Rounding can merge indices for quadratic spacing, in which case fewer than
    ``S`` steps are kept.
    """
    T = schedule.T
    if S < 2:
        raise ConfigurationError("need at least 2 inference steps")
    if S > T:
        raise ConfigurationError(f"cannot keep {S} steps of a {T}-step schedule")
    if spacing == "even":
        tau = even_indices(T, S)
    elif spacing == "quadratic":
        tau = quadratic_indices(T, S)
    else:
        raise ConfigurationError(f"unknown spacing {spacing!r}")
    tau = np.concatenate([[0], tau])
    abar = schedule.alpha_bars[tau].copy()
    alphas = abar[1:] / abar[:-1]
    # consecutive indices keep the parent's alpha bit-for-bit
    consecutive = np.diff(tau) == 1
    alphas[consecutive] = schedule.alphas[tau[1:][consecutive]]
    alphas = np.concatenate([[1.0], alphas])
    betas = np.concatenate([[0.0], 1.0 - alphas[1:]])
    betas[1:][consecutive] = schedule.betas[tau[1:][consecutive]]
    for arr in (tau, betas, alphas, abar):
        arr.setflags(write=False)
    return ReducedSchedule(schedule, tau, betas, alphas, abar)
