import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rpd.errors import ConfigurationError
from rpd.schedule import Schedule, make_linear_T1000, make_log_linear, reduce

# frozen from a 40-digit mpmath evaluation of abar_t = 1 / (1 + sigma_t^2)
LOG_LINEAR_ABAR = {1: 0.9999000099990001, 2: 0.99989031345266923, 100: 0.51156871429760544,
                   199: 0.00010968654733077419, 200: 9.999000099990001e-5}
LOG_LINEAR_BETA = {1: 9.999000099990001e-5, 2: 9.6975159855072696e-6, 100: 0.043182781445723603,
                   200: 0.088402329791938596}


def test_log_linear_frozen_values(sched):
    for t, v in LOG_LINEAR_ABAR.items():
        assert sched.alpha_bars[t] == pytest.approx(v, rel=1e-12)
    for t, v in LOG_LINEAR_BETA.items():
        assert sched.betas[t] == pytest.approx(v, rel=1e-9)


def test_linear_T1000_frozen():
    s = make_linear_T1000()
    assert s.T == 1000
    assert s.alpha_bars[1000] == pytest.approx(0.0046600985130772404, rel=1e-12)
    assert s.betas[500] == pytest.approx(0.0048037929805507178, rel=1e-12)


def test_indexing_convention(sched):
    assert sched.T == 200 and sched.alpha_bars[0] == 1.0
    np.testing.assert_array_equal(sched.alphas[1:], 1.0 - sched.betas[1:])
    np.testing.assert_array_equal(sched.alpha_bars, np.cumprod(sched.alphas))


def test_schedule_validation():
    with pytest.raises(ConfigurationError):
        Schedule.from_betas([0.1, 1.0])
    with pytest.raises(ConfigurationError):
        make_log_linear(1)
    with pytest.raises(ConfigurationError):
        make_log_linear(10, 1.0, 0.5)


def test_schedule_csv(tmp_path, sched):
    sched.to_csv(tmp_path / "s.csv")
    rows = np.loadtxt(tmp_path / "s.csv", delimiter=",", skiprows=1)
    assert rows.shape == (200, 4)
    np.testing.assert_array_equal(rows[:, 3], sched.alpha_bars[1:])


def test_reduced_indices(sched):
    assert list(reduce(sched, 3).timesteps) == [0, 1, 100, 200]
    assert list(reduce(sched, 10).timesteps) == [0, 1, 23, 45, 67, 89, 112, 134, 156, 178, 200]
    assert list(reduce(sched, 10, "quadratic").timesteps) == [0, 1, 3, 11, 23, 40, 62, 89, 121, 158, 200]
    with pytest.raises(ConfigurationError):
        reduce(sched, 1)
    with pytest.raises(ConfigurationError):
        reduce(sched, 201)
    with pytest.raises(ConfigurationError):
        reduce(sched, 5, "cubic")


def test_full_reduction_is_bit_identical(sched):
    red = reduce(sched, 200)
    np.testing.assert_array_equal(red.timesteps, np.arange(201))
    for name in ("betas", "alphas", "alpha_bars"):
        np.testing.assert_array_equal(getattr(red, name), getattr(sched, name))


@given(st.integers(2, 200), st.sampled_from(["even", "quadratic"]))
def test_reduced_telescoping(S, spacing):
    sched = make_log_linear()
    red = reduce(sched, S, spacing)
    tau = red.timesteps
    assert tau[1] == 1 and tau[-1] == 200 and np.all(np.diff(tau) > 0)
    np.testing.assert_allclose(np.cumprod(red.alphas[1:]), sched.alpha_bars[tau[1:]], rtol=1e-12)
    assert np.all((red.betas[1:] > 0) & (red.betas[1:] < 1))
