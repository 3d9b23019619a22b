import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdi import features as ft, fusion, kinematics as kin, learn, sim
from sdi.errors import DataError

QUIET = sim.MagneticEnvironment(B_world=(50.0, 0.0, 0.0), sensor_noise_std=0.0)


def static_series(n=50):
    t = np.arange(n) * 10_000_000
    return fusion.fusion_from_arrays(t, np.zeros((n, 3)), np.tile([20.0, -5.0, 40.0], (n, 1)), 100)


def test_static_case_is_all_zero():
    fs = static_series()
    np.testing.assert_array_equal(fs.zeta, 0.0)
    np.testing.assert_array_equal(fs.eta, 0.0)
    np.testing.assert_array_equal(fusion.mse(fs).values, 0.0)


def test_pure_yaw_cross_product():
    traj = sim.Trajectory.constant_rate(rates=(0.0, 0.0, 1.0))
    g, m = sim.simulate_benign_pair(traj, QUIET, duration=2.0, gyro_noise=0.0)
    fs = fusion.build_fusion_series(g, m)
    dt = 1 / fs.rate
    np.testing.assert_allclose(fs.zeta[0], [0.0, -50.0, 0.0], atol=50 * dt)
    np.testing.assert_allclose(fs.eta, fs.zeta, atol=50 * dt)


def test_sample_alignment_is_first_order():
    traj = sim.Trajectory.constant_rate(rates=(0.0, 0.0, 1.0))
    g, m = sim.simulate_benign_pair(traj, QUIET, duration=2.0, gyro_noise=0.0)
    lit = fusion.build_fusion_series(g, m, alignment="sample")
    mid = fusion.build_fusion_series(g, m)
    assert np.abs(lit.residual).max() > 10 * np.abs(mid.residual).max()
    with pytest.raises(DataError):
        fusion.build_fusion_series(g, m, alignment="forward")


def test_zeta_equals_eta_gives_zero():
    fs = fusion.FusionSeries(np.arange(20), np.ones((20, 3)), np.ones((20, 3)), 100)
    np.testing.assert_array_equal(fusion.mse(fs, 5).values, 0.0)


def test_constant_difference_nine():
    fs = fusion.FusionSeries(np.arange(30), np.tile([1.0, 2.0, 2.0], (30, 1)), np.zeros((30, 3)), 100)
    ms = fusion.mse(fs, 10)
    np.testing.assert_array_equal(ms.values, [9.0, 9.0, 9.0])
    np.testing.assert_array_equal(ms.t_ns, [0, 10, 20])


@given(st.floats(0.1, 10), st.floats(0.1, 10))
def test_mse_quadruples_when_residual_doubles(a, b):
    d = np.tile([a, -b, 0.5], (20, 1))
    one = fusion.mse(fusion.FusionSeries(np.arange(20), d, np.zeros_like(d), 100), 10).values
    two = fusion.mse(fusion.FusionSeries(np.arange(20), 2 * d, np.zeros_like(d), 100), 10).values
    np.testing.assert_allclose(two, 4 * one, rtol=1e-12)


def test_mse_window_errors():
    with pytest.raises(DataError):
        fusion.mse(static_series(10), 20)
    with pytest.raises(DataError):
        fusion.FusionSeries(np.arange(1), np.zeros((1, 3)), np.zeros((1, 3)), 100)


def test_learn_threshold_separable():
    stump = fusion.learn_threshold([0.1, 0.2], [5.0, 6.0])
    assert 0.2 < stump.threshold < 5
    assert list(stump.predict_many(np.array([0.1, 0.2, 5.0, 6.0]))) == [0, 0, 1, 1]


def brute_threshold(b, a):
    """Exhaustive Gini search over all midpoints; lowest threshold wins ties."""
    values = np.r_[b, a]
    y = np.r_[np.zeros(len(b)), np.ones(len(a))]
    u = np.unique(values)
    best = None
    for lo, hi in zip(u[:-1], u[1:]):
        thr = (lo + hi) / 2
        score = 0.0
        for side in (y[values <= thr], y[values > thr]):
            p = side.mean()
            score += len(side) * (1 - p**2 - (1 - p) ** 2)
        if best is None or score < best[0] - 1e-12:
            best = (score, lo, hi)
    return best


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 100_000))
def test_learn_threshold_matches_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    b = np.round(rng.gamma(2.0, 1.0, rng.integers(2, 30)), 2)
    a = np.round(rng.gamma(2.0, 2.5, rng.integers(2, 30)), 2)
    if len(np.unique(np.r_[a, b])) < 2:
        return
    _, lo, hi = brute_threshold(b, a)
    thr = fusion.learn_threshold(b, a).threshold
    assert lo <= thr < hi


def test_threshold_split_index_scale_invariant():
    rng = np.random.default_rng(11)
    b, a = rng.gamma(2, 1, 40), rng.gamma(2, 3, 40)
    base = fusion.learn_threshold(b, a)
    for alpha in (1e-3, 7.0, 1e4):
        scaled = fusion.learn_threshold(alpha * b, alpha * a)
        assert np.sum(alpha * np.r_[b, a] <= scaled.threshold) == np.sum(np.r_[b, a] <= base.threshold)


def test_learn_threshold_identical_values_error():
    with pytest.raises(DataError):
        fusion.learn_threshold([1.0], [1.0])


def cfg(window=10, trip=0.8):
    return fusion.FusionDetectorConfig(threshold=1.0, window=window, trip_fraction=trip)


def test_all_below_threshold_benign():
    assert fusion.windowed_fusion_detect(np.full(30, 0.5), cfg()) == [(0, 0), (10, 0), (20, 0)]


def test_exactly_eighty_percent_trips():
    block = np.r_[np.full(8, 2.0), np.full(2, 0.5)]
    assert fusion.windowed_fusion_detect(block, cfg()) == [(0, 1)]


def test_seventy_nine_percent_does_not_trip():
    block = np.r_[np.full(79, 2.0), np.full(21, 0.5)]
    assert fusion.windowed_fusion_detect(block, cfg(window=100)) == [(0, 0)]
    block = np.r_[np.full(80, 2.0), np.full(20, 0.5)]
    assert fusion.windowed_fusion_detect(block, cfg(window=100)) == [(0, 1)]


def test_equal_to_threshold_is_not_above():
    assert fusion.windowed_fusion_detect(np.full(10, 1.0), cfg()) == [(0, 0)]


@settings(max_examples=100)
@given(st.lists(st.floats(0, 10), min_size=10, max_size=60), st.floats(0, 5), st.floats(0, 5))
def test_verdicts_monotone_in_threshold(values, t1, t2):
    lo, hi = sorted((t1, t2))
    v_lo = fusion.windowed_fusion_detect(values, fusion.FusionDetectorConfig(lo, 10))
    v_hi = fusion.windowed_fusion_detect(values, fusion.FusionDetectorConfig(hi, 10))
    assert all(a >= b for (_, a), (_, b) in zip(v_lo, v_hi))


@pytest.mark.parametrize("kwargs", [dict(trip_fraction=0.0), dict(trip_fraction=1.5), dict(window=0)])
def test_detector_config_errors(kwargs):
    with pytest.raises(DataError):
        fusion.FusionDetectorConfig(threshold=1.0, **kwargs)


def median_mse(pairs):
    return float(np.median([np.median(fusion.mse(fusion.build_fusion_series(g, m)).values) for g, m in pairs]))


def benign_pairs(env, n=6, duration=5.0):
    kinds = [sim.Activity.WALKING, sim.Activity.POCKET, sim.Activity.RUNNING]
    return [
        sim.simulate_benign_pair(sim.MotionProfile.default(kinds[i % 3], duration=duration, seed=i), env, seed=i)
        for i in range(n)
    ]


def test_world_rotation_invariance():
    base = median_mse(benign_pairs(sim.MagneticEnvironment()))
    rng = np.random.default_rng(0)
    B = np.array(sim.MagneticEnvironment().B_world)
    for _ in range(10):
        R = kin.compose_rotation(kin.EulerAngles(*rng.uniform(-math.pi, math.pi, 3)))
        env = sim.MagneticEnvironment(B_world=tuple(R @ B))
        assert 0.5 <= median_mse(benign_pairs(env)) / base <= 2.0


def test_rocking_and_rolling_stand_out():
    env = sim.MagneticEnvironment()
    pairs = benign_pairs(env, n=8)
    benign = median_mse(pairs)
    rocked = [
        (sim.apply_rocking_attack(g, sim.AttackConfig("rocking", sim.Sine(3.0 + i, 5.0), seed=i)), m)
        for i, (g, m) in enumerate(pairs)
    ]
    rolled = [sim.make_rolling_pair([g for g, _ in pairs], [m for _, m in pairs], s) for s in range(8)]
    assert median_mse(rocked) >= 10 * benign
    assert median_mse(rolled) >= 10 * benign


def test_constant_mse_stream_features():
    X = fusion.mse_window_features(np.full(40, 0.3), 10)
    assert X.shape == (4, 8)
    names = ft.feature_names("full")
    np.testing.assert_array_equal(X[:, names.index("std_dev")], 0.0)


def test_mse_feature_detect_constant_stream_benign():
    rng = np.random.default_rng(3)
    benign = rng.gamma(2, 0.1, size=(40, 10))
    attack = rng.gamma(2, 5.0, size=(40, 10))
    X = np.r_[[fusion.mse_window_features(r, 10)[0] for r in np.r_[benign, attack]]]
    model = learn.train_tree(learn.Dataset(X, np.r_[np.zeros(40), np.ones(40)].astype(int)))
    _, verdicts = fusion.mse_feature_detect(np.full(30, 0.2), 10, model)
    assert verdicts == [0, 0, 0]


def test_mse_feature_folds_agree():
    env = sim.MagneticEnvironment()
    ds = sim.generate_dataset(k=0.1, seed=4, duration=5.0, env=env)
    rows, labels = [], []
    for pairs, label in ((ds.benign, 0), (ds.rocking + ds.rolling, 1)):
        for g, m in pairs:
            ms = fusion.mse(fusion.build_fusion_series(g, m))
            for x in fusion.mse_window_features(ms, 10):
                rows.append(x)
                labels.append(label)
    data = learn.Dataset(np.array(rows), np.array(labels))
    five = learn.kfold_eval(data, 5, learn.tree_trainer()).accuracy
    ten = learn.kfold_eval(data, 10, learn.tree_trainer()).accuracy
    assert abs(five - ten) <= 0.02
