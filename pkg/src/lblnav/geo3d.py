"""Rotation matrices, Euler angles and attitude kinematics.

Rotations are body-to-inertial, Euler angles follow the ZYX (yaw-pitch-roll)
convention: ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``.
"""

from typing import NamedTuple

import numpy as np

from ._jit import jit

RENORM_EVERY = 1000


class EulerAngles(NamedTuple):
    roll: float
    pitch: float
    yaw: float


@jit
def _skew(w):
    S = np.zeros((3, 3))
    S[0, 1] = -w[2]
    S[0, 2] = w[1]
    S[1, 0] = w[2]
    S[1, 2] = -w[0]
    S[2, 0] = -w[1]
    S[2, 1] = w[0]
    return S


@jit
def _expm_so3(w, dt):
    # Rodrigues formula for expm(skew(w) * dt)
    phi = w * dt
    theta = np.sqrt(phi[0] ** 2 + phi[1] ** 2 + phi[2] ** 2)
    K = _skew(phi)
    if theta < 1e-6:
        # series to 4th order, exact to machine precision at this size
        a = 1.0 - theta**2 / 6.0 + theta**4 / 120.0
        b = 0.5 - theta**2 / 24.0 + theta**4 / 720.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta**2
    return np.eye(3) + a * K + b * (K @ K)


@jit
def _orthonormalize(R):
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0.0:
        U[:, 2] = -U[:, 2]
        Q = U @ Vt
    return Q


@jit
def _propagate_attitude(R0, ws, dt, renorm_every):
    R = R0.copy()
    out = np.empty((ws.shape[0] + 1, 3, 3))
    out[0] = R
    for k in range(ws.shape[0]):
        R = R @ _expm_so3(ws[k], dt)
        if renorm_every > 0 and (k + 1) % renorm_every == 0:
            R = _orthonormalize(R)
        out[k + 1] = R
    return out


def skew(w):
    """Skew-symmetric matrix with ``skew(w) @ x == np.cross(w, x)``."""
    return _skew(np.asarray(w, dtype=float))


def euler_to_rotation(e):
    """Body-to-inertial rotation matrix from ZYX Euler angles (roll, pitch, yaw)."""
    roll, pitch, yaw = (float(c) for c in e)
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def euler_to_rotation_batch(roll, pitch, yaw):
    """Vectorized :func:`euler_to_rotation` over equally shaped angle arrays."""
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    R = np.empty(np.shape(roll) + (3, 3))
    R[..., 0, 0] = cy * cp
    R[..., 0, 1] = cy * sp * sr - sy * cr
    R[..., 0, 2] = cy * sp * cr + sy * sr
    R[..., 1, 0] = sy * cp
    R[..., 1, 1] = sy * sp * sr + cy * cr
    R[..., 1, 2] = sy * sp * cr - cy * sr
    R[..., 2, 0] = -sp
    R[..., 2, 1] = cp * sr
    R[..., 2, 2] = cp * cr
    return R


def rotation_to_euler(R):
    """Inverse of :func:`euler_to_rotation` for pitch inside (-pi/2, pi/2)."""
    R = np.asarray(R, dtype=float)
    pitch = -np.arcsin(np.clip(R[2, 0], -1.0, 1.0))
    roll = np.arctan2(R[2, 1], R[2, 2])
    yaw = np.arctan2(R[1, 0], R[0, 0])
    return EulerAngles(float(roll), float(pitch), float(yaw))


def integrate_attitude(R, w, dt):
    """Propagate ``dR/dt = R skew(w)`` over ``dt`` with ``w`` held constant.

    Uses the closed-form exponential so the result stays a rotation.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    return np.asarray(R, dtype=float) @ _expm_so3(np.asarray(w, dtype=float), float(dt))


def propagate_attitude(R0, ws, dt, renorm_every=RENORM_EVERY):
    """Compose :func:`integrate_attitude` over a sequence of body rates.

    Returns the ``len(ws) + 1`` attitudes including ``R0``. Every
    ``renorm_every`` steps the attitude is projected back onto SO(3) (polar
    decomposition) to bound round-off drift; pass 0 to disable.
    """
    ws = np.ascontiguousarray(ws, dtype=float).reshape(-1, 3)
    return _propagate_attitude(np.asarray(R0, dtype=float), ws, float(dt), int(renorm_every))


def orthonormalize(R):
    """Closest proper rotation to ``R`` in the Frobenius norm."""
    return _orthonormalize(np.asarray(R, dtype=float))
