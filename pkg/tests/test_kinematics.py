import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import rotation_oracle
from sdi import kinematics as kin
from sdi.errors import NumericError

angle = st.floats(-10.0, 10.0, allow_nan=False)
pitch = st.floats(-math.pi / 2 + 0.01, math.pi / 2 - 0.01)


@pytest.mark.parametrize(
    "func, arg, expected",
    [
        (kin.rotation_about_z, 0.0, np.eye(3)),
        (kin.rotation_about_z, math.pi / 2, [[0, 1, 0], [-1, 0, 0], [0, 0, 1]]),
        (kin.rotation_about_y, 0.0, np.eye(3)),
        (kin.rotation_about_y, math.pi / 2, [[0, 0, -1], [0, 1, 0], [1, 0, 0]]),
        (kin.rotation_about_x, 0.0, np.eye(3)),
        (kin.rotation_about_x, math.pi, [[1, 0, 0], [0, -1, 0], [0, 0, -1]]),
    ],
)
def test_elementary_rotations_fixed_values(func, arg, expected):
    np.testing.assert_allclose(func(arg), expected, atol=1e-12)


def test_rotation_about_z_orthogonal_at_0_3():
    R = kin.rotation_about_z(0.3)
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)


def test_rotation_about_y_determinant_at_0_7():
    assert np.linalg.det(kin.rotation_about_y(0.7)) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("func", [kin.rotation_about_x, kin.rotation_about_y, kin.rotation_about_z])
@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_non_finite_angle_rejected(func, bad):
    with pytest.raises(NumericError):
        func(bad)


def test_compose_identity():
    np.testing.assert_array_equal(kin.compose_rotation(kin.EulerAngles(0, 0, 0)), np.eye(3))


def test_compose_matches_loop_product():
    got = kin.compose_rotation(kin.EulerAngles(0.1, 0.2, 0.3))
    np.testing.assert_allclose(got, rotation_oracle(0.1, 0.2, 0.3), atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(angle, angle, angle)
def test_compose_is_rotation(phi, theta, psi):
    R = kin.compose_rotation(kin.EulerAngles(phi, theta, psi))
    assert kin.is_rotation(R, 1e-9)
    np.testing.assert_allclose(R, rotation_oracle(phi, theta, psi), atol=1e-12)


@pytest.mark.parametrize(
    "R, v, expected",
    [
        (np.eye(3), (1, 2, 3), (1, 2, 3)),
        (kin.rotation_about_z(math.pi / 2), (1, 0, 0), (0, -1, 0)),
    ],
)
def test_transform_examples(R, v, expected):
    np.testing.assert_allclose(kin.transform_to_device(R, v), expected, atol=1e-12)


def test_transform_preserves_norm_for_1000_pairs():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        R = kin.compose_rotation(kin.EulerAngles(*rng.uniform(-4, 4, 3)))
        v = rng.normal(size=3) * 10
        assert np.linalg.norm(kin.transform_to_device(R, v)) == pytest.approx(np.linalg.norm(v), abs=1e-9)


def test_transform_stack_matches_single():
    R = kin.compose_rotation(kin.EulerAngles(0.4, -0.2, 1.1))
    V = np.arange(12.0).reshape(4, 3)
    np.testing.assert_allclose(kin.transform_to_device(R, V), [R @ v for v in V])


@pytest.mark.parametrize(
    "angles, rates, expected",
    [
        ((0, 0, 0), (1, 0, 0), (1, 0, 0)),
        ((0, math.pi / 3, 0), (0, 0, 1), (-math.sin(math.pi / 3), 0, 0.5)),
        ((0, 0, 0), (0, 0, 1), (0, 0, 1)),
    ],
)
def test_angular_velocity_examples(angles, rates, expected):
    got = kin.angular_velocity_device(kin.EulerAngles(*angles), kin.EulerRates(*rates))
    np.testing.assert_allclose(got, expected, atol=1e-12)


def _fd_skew(angles, rates, h):
    """Central-difference estimate of (dR/dt) R^T along a straight-line angle path."""
    a = np.asarray(angles, dtype=float)
    r = np.asarray(rates, dtype=float)
    Rp = rotation_oracle(*(a + h * r))
    Rm = rotation_oracle(*(a - h * r))
    return (Rp - Rm) / (2 * h) @ rotation_oracle(*a).T


@settings(max_examples=50, deadline=None)
@given(angle, pitch, angle, st.tuples(*[st.floats(-3, 3)] * 3))
def test_angular_velocity_matches_finite_difference_skew(phi, theta, psi, rates):
    angles = kin.EulerAngles(phi, theta, psi)
    w = kin.angular_velocity_device(angles, kin.EulerRates(*rates))
    S = kin.skew_from_omega(w)
    errs = []
    for h in (1e-3, 1e-4):
        errs.append(np.max(np.abs(_fd_skew(angles, rates, h) - S)))
    scale = 1 + np.max(np.abs(rates)) ** 3
    assert errs[0] <= 1e-5 * scale
    if errs[0] > 1e-10:  # below this rounding noise dominates
        assert errs[1] <= errs[0] / 50


def test_angular_velocity_second_order_convergence():
    angles = kin.EulerAngles(0.3, -0.4, 1.2)
    rates = (0.7, -1.3, 2.1)
    w = kin.angular_velocity_device(angles, kin.EulerRates(*rates))
    e1 = np.max(np.abs(_fd_skew(angles, rates, 1e-2) - kin.skew_from_omega(w)))
    e2 = np.max(np.abs(_fd_skew(angles, rates, 5e-3) - kin.skew_from_omega(w)))
    assert math.log2(e1 / e2) == pytest.approx(2.0, abs=0.1)


def test_angular_velocity_vectorised():
    phi = np.array([0.0, 0.1, 0.2])
    got = kin.angular_velocity_device(kin.EulerAngles(phi, 0.3, 0.0), kin.EulerRates(1.0, 2.0, 3.0))
    assert got.shape == (3, 3)
    for i, p in enumerate(phi):
        single = kin.angular_velocity_device(kin.EulerAngles(p, 0.3, 0.0), kin.EulerRates(1.0, 2.0, 3.0))
        np.testing.assert_allclose(got[i], single)


@pytest.mark.parametrize(
    "w, expected",
    [
        ((0, 0, 0), np.zeros((3, 3))),
        ((1, 2, 3), [[0, 3, -2], [-3, 0, 1], [2, -1, 0]]),
    ],
)
def test_skew_examples(w, expected):
    np.testing.assert_array_equal(kin.skew_from_omega(w), expected)


@given(st.tuples(*[st.floats(-100, 100)] * 3), st.tuples(*[st.floats(-100, 100)] * 3))
def test_skew_is_antisymmetric_and_acts_as_negative_cross(w, b):
    S = kin.skew_from_omega(w)
    np.testing.assert_array_equal(S + S.T, np.zeros((3, 3)))
    np.testing.assert_allclose(S @ np.array(b), -np.cross(w, b), atol=1e-9)
    np.testing.assert_allclose(kin.omega_from_skew(S), w)


def test_field_derivative_identity_converges():
    """d/dt (R B_w) = -omega x (R B_w) for a constant world vector."""
    B_w = np.array([21.0, 0.0, 45.0])
    a0 = np.array([0.3, -0.5, 1.0])
    rates = np.array([0.4, -0.9, 1.7])

    def field(t):
        return rotation_oracle(*(a0 + rates * t)) @ B_w

    w = kin.angular_velocity_device(kin.EulerAngles(*a0), kin.EulerRates(*rates))
    exact = -np.cross(w, field(0.0))
    errs = [np.linalg.norm((field(h) - field(-h)) / (2 * h) - exact) for h in (1e-2, 5e-3)]
    assert math.log2(errs[0] / errs[1]) >= 1.9


def test_is_rotation_rejects_reflection_and_bad_shape():
    assert not kin.is_rotation(np.diag([1.0, 1.0, -1.0]))
    assert not kin.is_rotation(np.eye(2))
