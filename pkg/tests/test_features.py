import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sdi import features as ft, sim
from sdi.errors import DataError

finite = st.floats(-1e3, 1e3, allow_nan=False)
windows = arrays(np.float64, st.integers(4, 64), elements=finite)


def gyro_trace(values, rate=200):
    values = np.asarray(values, dtype=float)
    t = np.arange(len(values), dtype=np.int64) * int(1e9 / rate)
    return sim.Trace(sim.Sensor.GYROSCOPE, t, values, nominal_rate=rate)


def test_l2_three_four_five():
    w = ft.l2_series(gyro_trace(np.tile([3.0, 4.0, 0.0], (10, 1))))
    np.testing.assert_array_equal(w.values, 5.0)


def test_l2_zero_trace():
    np.testing.assert_array_equal(ft.l2_series(gyro_trace(np.zeros((5, 3)))).values, 0.0)


@given(arrays(np.float64, (8, 3), elements=st.integers(-10**6, 10**6).map(lambda i: i / 1000)))
def test_l2_bounds_each_component(v):
    w = ft.l2_series(gyro_trace(v)).values
    assert np.all(w >= np.abs(v).max(axis=1))


def test_l2_empty_trace():
    with pytest.raises(DataError):
        ft.l2_series(gyro_trace(np.zeros((0, 3))))


def test_constant_window():
    fv = ft.extract_features(ft.Window(np.full(100, 7.0), 200))
    assert fv.names == ft.FULL
    assert (fv["max"], fv["min"], fv["mean"], fv["rms"]) == (7.0, 7.0, 7.0, 7.0)
    assert (fv["std_dev"], fv["avg_dev"], fv["zcr"]) == (0.0, 0.0, 0.0)


def test_pure_sine_window():
    N, cycles, A = 1000, 10, 2.0
    x = A * np.sin(2 * math.pi * cycles * np.arange(N) / N)
    fv = ft.extract_features(ft.Window(x, 200))
    assert fv["rms"] == pytest.approx(A / math.sqrt(2), rel=1e-9)
    assert fv["mean"] == pytest.approx(0.0, abs=1e-12)
    # x[0] sits on zero, so that crossing belongs to the previous window
    assert fv["zcr"] == pytest.approx((2 * cycles - 1) / (N - 1), abs=1e-12)
    assert fv["avg_dev"] == pytest.approx(2 * A / math.pi, rel=1e-3)


def test_alternating_window_zcr_one():
    x = np.tile([1.0, -1.0], 50)
    assert ft.extract_features(ft.Window(x, 200))["zcr"] == 1.0


@pytest.mark.parametrize("N, k, A", [(64, 3, 1.0), (100, 7, 2.5), (257, 20, 0.3)])
def test_max_val_fft_single_bin(N, k, A):
    x = A * np.cos(2 * math.pi * k * np.arange(N) / N + 0.4)
    assert ft.max_val_fft(x) == pytest.approx(N * A / 2, rel=1e-6)


def test_max_val_fft_ignores_dc():
    x = 100 + np.cos(2 * math.pi * 4 * np.arange(32) / 32)
    assert ft.max_val_fft(x) == pytest.approx(16.0, rel=1e-9)


@pytest.mark.parametrize("variant, n", [("full", 1), ("full", 3), ("iot5", 1)])
def test_too_short_window(variant, n):
    with pytest.raises(DataError):
        ft.extract_features(ft.Window(np.ones(n), 200), variant)


def test_unknown_variant():
    with pytest.raises(DataError):
        ft.feature_names("all25")


def test_iot5_subset_matches_full():
    x = np.random.default_rng(1).normal(size=50)
    full = ft.extract_features(ft.Window(x, 200)).as_dict()
    iot = ft.extract_features(ft.Window(x, 200), "iot5")
    assert iot.names == ft.IOT5
    assert iot.as_dict() == {n: full[n] for n in ft.IOT5}


@settings(max_examples=200)
@given(windows)
def test_feature_invariants(x):
    fv = ft.extract_features(ft.Window(x, 200))
    assert fv["max"] >= fv["mean"] - 1e-9 and fv["mean"] >= fv["min"] - 1e-9
    assert fv["std_dev"] >= 0 and fv["rms"] >= 0
    assert 0 <= fv["zcr"] <= 1


@settings(max_examples=200)
@given(windows, st.floats(0.01, 100).flatmap(lambda a: st.sampled_from([a, -a])))
def test_scaling(x, alpha):
    base = ft.extract_features(ft.Window(x, 200))
    scaled = ft.extract_features(ft.Window(alpha * x, 200))
    tol = dict(rel=1e-9, abs=1e-9 * (1 + abs(alpha)) * (1 + np.abs(x).max()))
    for name in ("rms", "avg_dev", "std_dev", "max_val_fft"):
        assert scaled[name] == pytest.approx(abs(alpha) * base[name], **tol)
    assert scaled["mean"] == pytest.approx(alpha * base["mean"], **tol)
    hi, lo = ("max", "min") if alpha > 0 else ("min", "max")
    assert scaled[hi] == pytest.approx(alpha * base["max"], **tol)
    assert scaled[lo] == pytest.approx(alpha * base["min"], **tol)


@settings(max_examples=200)
@given(windows, st.floats(-100, 100))
def test_shift(x, c):
    base = ft.extract_features(ft.Window(x, 200))
    shifted = ft.extract_features(ft.Window(x + c, 200))
    tol = dict(abs=1e-8 * (1 + np.abs(x).max() + abs(c)))
    for name in ("max", "min", "mean"):
        assert shifted[name] == pytest.approx(base[name] + c, **tol)
    for name in ("std_dev", "avg_dev"):
        assert shifted[name] == pytest.approx(base[name], **tol)


def test_zcr_shift_invariance_generic():
    rng = np.random.default_rng(2)
    for _ in range(200):
        x = rng.normal(size=40)
        assert ft.zero_crossing_rate(x + rng.uniform(-50, 50)) == ft.zero_crossing_rate(x)


def test_zcr_invariant_under_positive_scaling_1000_windows():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        x = rng.normal(size=rng.integers(4, 200)) * rng.uniform(0.1, 10)
        alpha = math.exp(rng.uniform(-6, 6))
        assert ft.zero_crossing_rate(alpha * x) == ft.zero_crossing_rate(x)


def test_per_axis_identical_axes():
    x = np.random.default_rng(4).normal(size=60)
    fv = ft.features_per_axis(gyro_trace(np.column_stack([x, x, x])))
    assert len(fv) == 18
    blocks = fv.values.reshape(3, 6)
    np.testing.assert_array_equal(blocks[0], blocks[1])
    np.testing.assert_array_equal(blocks[0], blocks[2])


def test_per_axis_x_only_motion():
    rng = np.random.default_rng(5)
    n, noise = 400, 0.01
    t = np.arange(n) / 200
    v = rng.normal(0, noise, size=(n, 3))
    v[:, 0] += np.sin(2 * math.pi * 2 * t)
    fv = ft.features_per_axis(gyro_trace(v))
    assert fv["x_std_dev"] > 0.5
    for axis in "yz":
        assert fv[f"{axis}_std_dev"] == pytest.approx(noise, rel=0.15)


def test_per_axis_names_and_errors():
    assert ft.feature_names("per_axis6")[:2] == ("x_max", "x_mean")
    with pytest.raises(DataError):
        ft.features_per_axis(gyro_trace(np.zeros((10, 3))), "full")
    with pytest.raises(DataError):
        ft.features_per_axis(gyro_trace(np.zeros((1, 3))))


def test_rest_vs_rocking_separable_on_std_dev():
    benign, attacked = [], []
    env = sim.MagneticEnvironment(sensor_noise_std=0.0)
    for seed in range(10):
        g, _ = sim.simulate_benign_pair(sim.MotionProfile.default("rest", seed=seed), env, gyro_noise=0.0)
        benign.append(ft.trace_features(g, "full")["std_dev"])
        for wave in (sim.Sine(2.0 + seed, 1.0), sim.UniformNoise(1.0 + seed)):
            bad = sim.apply_rocking_attack(g, sim.AttackConfig("rocking", wave, seed=seed))
            attacked.append(ft.trace_features(bad, "full")["std_dev"])
    assert max(benign) < min(attacked)


def test_windowed_rows_tumbling():
    tr = gyro_trace(np.random.default_rng(6).normal(size=(1050, 3)))
    n = ft.window_samples(1000, 200)
    rows = list(ft.windowed_rows(tr, "full", n))
    assert n == 200
    assert [lo for lo, _ in rows] == [0, 200, 400, 600, 800]
    np.testing.assert_array_equal(rows[1][1].values, ft.trace_features(tr.slice(200, 400), "full").values)
