"""Rigid-body rotation math for the device and world (NED) frames.

Conventions
-----------
Orientation is given by Tait-Bryan angles ``(phi, theta, psi)`` (roll,
pitch, yaw).  The matrix ``R`` maps world-frame vectors into the device
frame::

    R(phi, theta, psi) = Rx(phi) @ Ry(theta) @ Rz(psi)
    v_device = R @ v_world

Matrices are indexed ``[row, col]``.  Angles are never wrapped; the
trigonometric functions take care of periodicity.

Only forward formulas are provided.  Euler rates are not recovered from
angular velocity, so the singularity at ``theta = +/- pi/2`` never needs
special handling here (the simulator keeps ``|theta|`` below
``pi/2 - 0.01``).
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from sdi.errors import NumericError

__all__ = [
    "EulerAngles",
    "EulerRates",
    "rotation_about_x",
    "rotation_about_y",
    "rotation_about_z",
    "compose_rotation",
    "transform_to_device",
    "angular_velocity_device",
    "skew_from_omega",
    "omega_from_skew",
    "is_rotation",
]


class EulerAngles(NamedTuple):
    """Roll, pitch and yaw in radians."""

    phi: float
    theta: float
    psi: float


class EulerRates(NamedTuple):
    """Time derivatives of the Euler angles in rad/s."""

    phi_dot: float
    theta_dot: float
    psi_dot: float


def _check_finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise NumericError(f"non-finite angle: {v!r}")


def rotation_about_z(psi: float) -> np.ndarray:
    """Yaw rotation about the initial Z axis."""
    _check_finite(psi)
    c, s = math.cos(psi), math.sin(psi)
    return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_about_y(theta: float) -> np.ndarray:
    """Pitch rotation about the intermediate Y axis."""
    _check_finite(theta)
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def rotation_about_x(phi: float) -> np.ndarray:
    """Roll rotation about the final X axis."""
    _check_finite(phi)
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])


def compose_rotation(angles: EulerAngles) -> np.ndarray:
    """World-to-device rotation ``Rx(phi) @ Ry(theta) @ Rz(psi)``."""
    phi, theta, psi = angles
    return rotation_about_x(phi) @ rotation_about_y(theta) @ rotation_about_z(psi)


def transform_to_device(R: np.ndarray, v_world) -> np.ndarray:
    """Express a world-frame vector (or an ``(N, 3)`` stack) in the device frame."""
    v = np.asarray(v_world, dtype=float)
    if v.ndim == 1:
        return R @ v
    return v @ np.asarray(R).T


def angular_velocity_device(angles: EulerAngles, rates: EulerRates) -> np.ndarray:
    """Angular velocity in device-frame Cartesian components.

    Works elementwise, so each field of ``angles`` and ``rates`` may also be
    an array of samples; the result then has shape ``(N, 3)``.
    """
    phi, theta, _ = (np.asarray(a, dtype=float) for a in angles)
    phi_dot, theta_dot, psi_dot = (np.asarray(r, dtype=float) for r in rates)
    sphi, cphi = np.sin(phi), np.cos(phi)
    sth, cth = np.sin(theta), np.cos(theta)
    wx = phi_dot - psi_dot * sth
    wy = theta_dot * cphi + psi_dot * cth * sphi
    wz = -theta_dot * sphi + psi_dot * cth * cphi
    return np.stack(np.broadcast_arrays(wx, wy, wz), axis=-1)


def skew_from_omega(omega_d) -> np.ndarray:
    """The matrix ``(dR/dt) R^T`` for device-frame angular velocity ``omega_d``.

    Multiplying it with a vector ``b`` gives ``-omega_d x b``.
    """
    wx, wy, wz = (float(w) for w in omega_d)
    return np.array([[0.0, wz, -wy], [-wz, 0.0, wx], [wy, -wx, 0.0]])


def omega_from_skew(S: np.ndarray) -> np.ndarray:
    """Inverse of :func:`skew_from_omega`, averaging the antisymmetric pairs."""
    S = np.asarray(S, dtype=float)
    return np.array(
        [
            0.5 * (S[1, 2] - S[2, 1]),
            0.5 * (S[2, 0] - S[0, 2]),
            0.5 * (S[0, 1] - S[1, 0]),
        ]
    )


def is_rotation(R: np.ndarray, tol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        return False
    ortho = np.max(np.abs(R @ R.T - np.eye(3)))
    return bool(ortho <= tol and abs(np.linalg.det(R) - 1.0) <= tol)
