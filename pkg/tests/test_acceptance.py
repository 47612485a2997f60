"""One test per acceptance criterion; each prints a PASS/FAIL line with the observed value.

Criteria 10 and 11 train real models and take roughly half an hour together;
deselect them with ``-m "not slow"``.
"""

import math
import time

import numpy as np
import pytest

from rpd import diffusion as D
from rpd import oracles
from rpd.experiments import aux_ablation, desk_experiment
from rpd.metrics import wasserstein1
from rpd.prior import AnalyticMixturePrior
from rpd.sampler import generate
from rpd.schedule import make_log_linear, reduce
from rpd.train import TrainConfig, make_predictor
from rpd.verify import gradient_check_error, random_draws

SCHED = make_log_linear(200, 0.01, 100.0)
N_DRAWS = 10_000


def record(log, k, ok, detail):
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}"
    log.append(line)
    print(line)
    assert ok, line


def draws(seed, t_min=1):
    rng = np.random.default_rng(seed)
    x0, t, eps0, mu, sig = random_draws(rng, SCHED, N_DRAWS, t_min=t_min)
    x_t = D.forward_sample(x0, t, eps0, mu, sig, SCHED).x_t
    return x0, t, eps0, mu, sig, x_t


def test_criterion_01_aux_eps_identity(acceptance_log):
    start = time.perf_counter()
    x0, t, eps0, mu, sig, x_t = draws(1)
    w = D.aux_eps(x_t, t, mu, sig, SCHED, delta=0.0)
    ab = SCHED.alpha_bars[t]
    lhs = np.sum((eps0 - w) ** 2, axis=1)
    rhs = ab * np.sum((x0 - mu) ** 2, axis=1) / ((1 - ab) * sig**2)
    err = float(np.max(np.abs(lhs - rhs)))
    secs = time.perf_counter() - start
    record(acceptance_log, 1, err <= 1e-9 and secs < 1.0, f"max error {err:.3g} (tol 1e-9), {secs:.3f} s")


def test_criterion_02_aux_v_identity(acceptance_log):
    x0, t, eps0, mu, sig, x_t = draws(2)
    v_hat = D.velocity_targets(x0, t, eps0, mu, sig, SCHED).v_hat
    w = D.aux_v(x_t, t, mu, sig, SCHED, delta=0.0)
    ab = SCHED.alpha_bars[t]
    lhs = np.sum((v_hat - w) ** 2, axis=1)
    rhs = np.sum((x0 - mu) ** 2, axis=1) / ((1 - ab) * sig**2)
    err = float(np.max(np.abs(lhs - rhs)))
    record(acceptance_log, 2, err <= 1e-9, f"max error {err:.3g} (tol 1e-9)")


def test_criterion_03_terminal_kl(acceptance_log):
    # test cases cover the whole stated radius, including its boundary. The KL is
    # abar_T r^2 / 2 + O(abar_T^2) at r = |x0-mu|/sigma, so 1e-3 holds only for r below about 4.47
    rng = np.random.default_rng(3)
    abar_T = SCHED.alpha_bars[200]
    worst, worst_r = 0.0, 0.0
    for r in np.concatenate([np.linspace(0, 10, 41), rng.uniform(0, 10, 200)]):
        mu = rng.normal(0, 2, 2)
        s = rng.uniform(0.05, 3.0)
        u = rng.normal(size=2)
        x0 = mu + s * r * u / np.linalg.norm(u)
        mean, var = D.marginal_params(x0, 200, mu, s, SCHED)
        kl = D.kl_gaussians_isotropic(mean, math.sqrt(var), mu, s, 2)
        ref = oracles.kl_diag_gaussians(mean, var, mu, s**2)
        assert kl == pytest.approx(ref, rel=1e-9, abs=1e-15)
        if kl > worst:
            worst, worst_r = kl, r
    ok = abar_T <= 1.1e-4 and worst <= 1e-3
    record(acceptance_log, 3, ok,
           f"abar_T {abar_T:.4g} (<= 1.1e-4); max KL {worst:.3g} at |x0-mu| = {worst_r:.2f} sigma (tol 1e-3)")


def test_criterion_04_composition(acceptance_log):
    rng = np.random.default_rng(4)
    ts = np.arange(1, 201)
    worst = 0.0
    for _ in range(20):
        x0, mu, s = rng.normal(size=2) * 2, rng.normal(size=2), rng.uniform(0.05, 3.0)
        cm, cv = oracles.composed_marginals(SCHED.betas, mu, s, x0)
        mean, var = D.marginal_params(np.tile(x0, (200, 1)), ts, np.tile(mu, (200, 1)), np.full(200, s), SCHED)
        worst = max(worst, float(np.max(np.abs(mean - cm[1:]) / np.abs(cm[1:]))),
                    float(np.max(np.abs(np.ravel(var) - cv[1:]) / cv[1:])))
    record(acceptance_log, 4, worst <= 1e-10, f"max relative error {worst:.3g} (tol 1e-10)")


def test_criterion_05_posterior_quadrature(acceptance_log):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        t = int(rng.integers(2, 201))
        x0, mu, s = rng.normal(), rng.normal(), rng.uniform(0.1, 2.0)
        x_t = float(D.forward_sample(x0, t, rng.normal(), mu, s, SCHED).x_t)
        qm, qv = oracles.posterior_by_quadrature(x_t, x0, t, SCHED.betas, mu, s)
        p = D.posterior_params(x_t, x0, t, mu, s, SCHED)
        worst = max(worst, abs(qm - float(p.mu_tilde)) / max(1.0, abs(qm)), abs(qv - float(p.beta_tilde)) / qv)
    record(acceptance_log, 5, worst <= 1e-6, f"max error {worst:.3g} over 100 draws (tol 1e-6)")


def test_criterion_06_reparameterisation(acceptance_log):
    x0, t, eps0, mu, sig, x_t = draws(6, t_min=2)
    post = D.posterior_params(x_t, x0, t, mu, sig, SCHED)
    v_hat = D.velocity_targets(x0, t, eps0, mu, sig, SCHED).v_hat
    e1 = float(np.max(np.abs(D.mu_from_eps(x_t, eps0, t, mu, sig, SCHED) - post.mu_tilde)))
    e2 = float(np.max(np.abs(D.mu_from_v(x_t, v_hat, t, mu, sig, SCHED) - post.mu_tilde)))
    record(acceptance_log, 6, max(e1, e2) <= 1e-10, f"eps route {e1:.3g}, v route {e2:.3g} (tol 1e-10)")


def test_criterion_07_ddpm_reduction(acceptance_log):
    rng = np.random.default_rng(7)
    ref = oracles.DDPMReference(SCHED.betas)
    n = N_DRAWS
    x0, eps0, e_pred, noise = (rng.normal(size=(n, 2)) for _ in range(4))
    t = rng.integers(1, 201, n)
    zero, one = np.zeros((n, 2)), np.ones(n)
    x_t = D.forward_sample(x0, t, eps0, zero, one, SCHED).x_t
    bad = int(np.sum(x_t != ref.q_sample(x0, t, eps0)))
    t2 = np.maximum(t, 2)
    post = D.posterior_params(x_t, x0, t2, zero, one, SCHED)
    rm, rv = ref.q_posterior(x_t, x0, t2)
    bad += int(np.sum(post.mu_tilde != rm)) + int(np.sum(post.beta_tilde != rv))
    step = D.rpd_reverse_step(x_t, t, e_pred, zero, one, SCHED, noise)
    bad += int(np.sum(step != ref.p_step(x_t, e_pred, t, noise, D.DEFAULT_SIGMA_MIN)))
    record(acceptance_log, 7, bad == 0, f"{bad} mismatching entries over {n} draws (bit-equal required)")


def test_criterion_08_gradients(acceptance_log):
    rng = np.random.default_rng(8)
    shapes = [(3, 6, 5, 2), (22, 8, 8, 2), (2, 4, 2), (5, 7, 7, 7, 3)]
    worst = max(gradient_check_error(rng, w) for w in shapes for _ in range(3))
    record(acceptance_log, 8, worst <= 1e-4, f"max relative error {worst:.3g} (tol 1e-4)")


def test_criterion_09_w1(acceptance_log):
    rng = np.random.default_rng(9)
    worst_oracle, worst_shift = 0.0, 0.0
    for _ in range(100):
        n = int(rng.integers(1, 9))
        a, b = rng.normal(size=(2, n, 2))
        worst_oracle = max(worst_oracle, abs(wasserstein1(a, b).value - oracles.w1_bruteforce(a, b)))
        d = rng.normal(size=2) * 3
        worst_shift = max(worst_shift, abs(wasserstein1(a, a + d).value - np.linalg.norm(d)))
    ok = worst_oracle <= 1e-12 and worst_shift <= 1e-9
    record(acceptance_log, 9, ok, f"vs permutation oracle {worst_oracle:.3g}; translation {worst_shift:.3g} (tol 1e-9)")


@pytest.mark.slow
def test_criterion_10_desk_experiment(acceptance_log):
    start = time.perf_counter()
    res = desk_experiment(seeds=(0, 1, 2), scale=0.1,
                          progress=lambda r: print(f"  {r.mode} seed {r.seed}: RW-1WD {r.rw_w1:.5f}", flush=True))
    rpd, ddpm = res.median("rpd-eps"), res.median("ddpm")
    mins = (time.perf_counter() - start) / 60
    per_seed = ", ".join(f"{a:.4f}/{b:.4f}" for a, b in zip(res.rw("rpd-eps"), res.rw("ddpm")))
    record(acceptance_log, 10, rpd < ddpm,
           f"median RW-1WD RPD {rpd:.5f} vs DDPM {ddpm:.5f} (per seed RPD/DDPM {per_seed}), {mins:.1f} min")


@pytest.mark.slow
def test_criterion_11_aux_ablation(acceptance_log):
    res = aux_ablation(seeds=(0, 1, 2), scale=0.1, iterations=4000)
    pairs = ", ".join(f"{o:.4f}/{m:.4f}" for o, m in zip(res.omega, res.mu))
    record(acceptance_log, 11, res.wins >= 2,
           f"omega beats mu on {res.wins}/3 seeds (loss at 4000, omega/mu: {pairs})")


def test_criterion_12_reduced_steps(acceptance_log):
    prior = AnalyticMixturePrior([0.4, 0.6], [[-1.0, 0.0], [1.0, 0.5]], [0.3, 0.2])
    pred = make_predictor(prior, TrainConfig(hidden=(32, 32)), np.random.default_rng(12))
    full = generate(pred, prior, SCHED, count=200, seed=12).points.points
    same = generate(pred, prior, reduce(SCHED, 200), count=200, seed=12).points.points
    mismatch = int(np.sum(full != same))
    worst = 0.0
    for S in (3, 10, 50):
        red = reduce(SCHED, S)
        prods = np.cumprod(red.alphas[1:])
        worst = max(worst, float(np.max(np.abs(prods - red.alpha_bars[1:]) / red.alpha_bars[1:])),
                    float(np.max(np.abs(prods - SCHED.alpha_bars[red.timesteps[1:]]) /
                                 SCHED.alpha_bars[red.timesteps[1:]])))
    record(acceptance_log, 12, mismatch == 0 and worst <= 1e-12,
           f"S=T mismatching entries {mismatch}; telescoping error {worst:.3g} (tol 1e-12)")
