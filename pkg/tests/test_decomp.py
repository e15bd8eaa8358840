import numpy as np
import pytest

from plasmaview.decomp import DecompConfig, decompose, moving_average, recompose
from plasmaview.errors import ConfigError


def test_hand_moving_average_window3():
    x = np.array([[1.0], [2.0], [3.0], [4.0]])
    trend, seasonal = decompose(x, 3)
    assert np.allclose(trend.ravel(), [4 / 3, 2.0, 3.0, 11 / 3])
    assert np.allclose(seasonal.ravel(), [-1 / 3, 0.0, 0.0, 1 / 3])


def test_window_one_is_identity():
    x = np.random.default_rng(0).normal(size=(10, 3))
    trend, seasonal = decompose(x, 1)
    assert np.array_equal(trend, x)
    assert np.all(seasonal == 0.0)


def test_constant_series_has_zero_seasonal():
    x = np.full((20, 4), 2.5)
    _, seasonal = decompose(x, 7)
    assert np.all(np.abs(seasonal) < 1e-12)


def test_even_window_rejected():
    with pytest.raises(ConfigError):
        DecompConfig(window=4)
    with pytest.raises(ConfigError):
        moving_average(np.zeros((5, 1)), 2)


def test_recompose_shape_mismatch():
    with pytest.raises(ConfigError):
        recompose(np.zeros((3, 2)), np.zeros((4, 2)))


def test_recompose_of_trend_and_zero():
    t = np.random.default_rng(1).normal(size=(6, 2))
    assert np.array_equal(recompose(t, np.zeros_like(t)), t)


def test_round_trip_random_matrices():
    rng = np.random.default_rng(42)
    for _ in range(200):
        T = int(rng.integers(1, 80))
        d = int(rng.integers(1, 13))
        w = int(rng.choice([1, 3, 5, 9, 25, 51]))
        x = rng.normal(size=(T, d)) * rng.uniform(0.1, 10)
        trend, seasonal = decompose(x, w)
        assert np.max(np.abs(recompose(trend, seasonal) - x)) < 1e-12


def test_round_trip_64x12_window25():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(64, 12))
    trend, seasonal = decompose(x, 25)
    assert np.max(np.abs((trend + seasonal) - x)) < 1e-12


def test_linear_ramp_trend_interior():
    T, w = 60, 9
    ramp = np.linspace(0.0, 5.0, T)[:, None]
    trend, _ = decompose(ramp, w)
    interior = slice(w // 2, T - w // 2)
    assert np.max(np.abs(trend[interior] - ramp[interior])) < 1e-12
    # the ends deviate because of replicate padding
    assert abs(trend[0, 0] - ramp[0, 0]) > 0


def test_channel_independence():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(40, 5))
    joint_t, joint_s = decompose(x, 11)
    for c in range(5):
        t_c, s_c = decompose(x[:, [c]], 11)
        assert np.max(np.abs(joint_t[:, [c]] - t_c)) < 1e-12
        assert np.max(np.abs(joint_s[:, [c]] - s_c)) < 1e-12


def test_window_larger_than_series():
    x = np.random.default_rng(5).normal(size=(4, 2))
    trend, seasonal = decompose(x, 25)
    assert np.max(np.abs(recompose(trend, seasonal) - x)) < 1e-12
