import numpy as np
import pytest

from rpd.errors import ConfigurationError
from rpd.prior import AnalyticMixturePrior, TrivialNormalPrior
from rpd.sampler import (default_schedule, family_variance, generate, generate_fixed_z, write_samples_csv,
                         write_trajectories_csv)
from rpd.schedule import reduce
from rpd.train import TrainConfig, make_predictor

MIX = AnalyticMixturePrior([0.3, 0.7], [[-1.0, 0.5], [1.0, -0.5]], [0.2, 0.4])


def predictor(mode="rpd-eps", prior=MIX, zero=False, seed=0, **kw):
    p = make_predictor(prior, TrainConfig(mode=mode, hidden=(16, 16), **kw), np.random.default_rng(seed))
    if zero:
        p.net.weights[-1][...] = 0
        p.net.biases[-1][...] = 0
    return p


def test_zero_predictor_recursion():
    pred = predictor("ddpm", zero=True)
    sched = default_schedule(pred)
    x_T = np.array([0.3, -0.2])
    out = generate(pred, TrivialNormalPrior(), count=3, noise_scale=0.0, x_init=x_T, record_trajectory=True)
    traj = out.trajectory
    assert traj.shape == (201, 3, 2)
    for k in range(1, 201):
        t = 201 - k
        np.testing.assert_allclose(traj[k], traj[k - 1] / np.sqrt(sched.alphas[t]), rtol=1e-12)
    np.testing.assert_allclose(out.points.points[0], x_T / np.sqrt(sched.alpha_bars[200]), rtol=1e-10)
    assert np.linalg.norm(out.points.points[0]) > 50 * np.linalg.norm(x_T)


def test_count_zero():
    out = generate(predictor(), MIX, count=0, record_trajectory=True)
    assert len(out.points) == 0 and out.trajectory.shape == (201, 0, 2)
    with pytest.raises(ConfigurationError):
        generate(predictor(), MIX, count=-1)


@pytest.mark.parametrize("mode", ["rpd-eps", "rpd-v"])
def test_determinism(mode):
    pred = predictor(mode)
    a = generate(pred, MIX, count=50, seed=3).points.points
    b = generate(pred, MIX, count=50, seed=3).points.points
    c = generate(pred, MIX, count=50, seed=4).points.points
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_reduced_full_length_is_bit_identical():
    pred = predictor()
    sched = default_schedule(pred)
    a = generate(pred, MIX, sched, count=40, seed=1).points.points
    b = generate(pred, MIX, reduce(sched, 200), count=40, seed=1).points.points
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("S,spacing", [(3, "even"), (10, "quadratic")])
def test_trajectory_length_reduced(S, spacing):
    pred = predictor()
    out = generate(pred, MIX, reduce(default_schedule(pred), S, spacing), count=5, record_trajectory=True)
    assert out.trajectory.shape == (S + 1, 5, 2)
    np.testing.assert_array_equal(out.trajectory[-1], out.points.points)


def test_initial_law():
    pred = predictor()
    n = 40000
    out = generate(pred, MIX, reduce(default_schedule(pred), 2), count=n, seed=7, record_trajectory=True)
    x_T, z = out.trajectory[0], out.z
    assert abs(np.mean(z == 1) - 0.7) < 4 * np.sqrt(0.21 / n)
    for k in (0, 1):
        sel = x_T[z == k]
        m = len(sel)
        np.testing.assert_allclose(sel.mean(axis=0), MIX.means[k], atol=4 * MIX.sigmas[k] / np.sqrt(m))
        np.testing.assert_allclose(sel.var(axis=0), MIX.sigmas[k] ** 2,
                                   rtol=4 * np.sqrt(2 / m))


def test_mode_mismatch():
    with pytest.raises(ConfigurationError):
        generate(predictor("rpd-eps"), MIX, count=1, mode="rpd-v")
    with pytest.raises(ConfigurationError):
        generate(predictor("rpd-eps"), MIX, count=1, mode="ddpm")
    with pytest.raises(ConfigurationError):
        generate(predictor("rpd-eps"), MIX, count=1, mode="flow")
    generate(predictor("rpd-v"), MIX, count=1, mode="rpd-v")


def test_schedule_longer_than_predictor():
    pred = predictor(T=50)
    with pytest.raises(ConfigurationError):
        generate(pred, MIX, default_schedule(predictor()), count=1)


def test_fixed_z_trivial_equals_generate():
    pred = predictor("ddpm")
    fam = generate_fixed_z(pred, TrivialNormalPrior(), seeds=[5, 9])
    for s, row in zip([5, 9], fam):
        np.testing.assert_array_equal(row, generate(pred, TrivialNormalPrior(), count=1, seed=s).points.points[0])


def test_fixed_z_noise_free_family_collapses():
    pred = predictor()
    fam = generate_fixed_z(pred, MIX, z=1, seeds=range(6), noise_scale=0.0)
    assert np.all(fam == fam[0])
    assert family_variance(fam) < 1e-20


def test_family_variance_for_two_step_counts():
    pred = predictor()
    sched = default_schedule(pred)
    v3 = family_variance(generate_fixed_z(pred, MIX, reduce(sched, 3), z=0, seeds=range(30)))
    v50 = family_variance(generate_fixed_z(pred, MIX, reduce(sched, 50), z=0, seeds=range(30)))
    assert v3 > 0 and v50 > 0
    assert generate_fixed_z(pred, MIX, seeds=[]).shape == (0, 2)


def test_csv_writers(tmp_path):
    pred = predictor()
    out = generate(pred, MIX, reduce(default_schedule(pred), 3), count=4, record_trajectory=True)
    write_samples_csv(out, tmp_path / "s.csv")
    assert len((tmp_path / "s.csv").read_text().splitlines()) == 5
    write_trajectories_csv(out.trajectory, tmp_path / "t.csv")
    rows = (tmp_path / "t.csv").read_text().splitlines()
    assert rows[0] == "sample,step,x,y" and len(rows) == 1 + 4 * 4
    assert rows[1].startswith("0,3,") and rows[4].startswith("0,0,")
