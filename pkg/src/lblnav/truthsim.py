"""Ground-truth trajectories and noisy sensor measurements.

Frames: the inertial frame has z pointing down, so gravity is ``(0, 0, g0)``
in inertial coordinates. Velocity, gravity, angular rate and the
accelerometer reading are expressed in body coordinates, and the
accelerometer measures ``a = dv/dt + w x v - g``.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import RangeTooSmall
from .geo3d import euler_to_rotation, euler_to_rotation_batch

DEFAULT_LANDMARKS = np.array(
    [
        [0.0, 0.0, 1000.0],
        [1000.0, 0.0, 1000.0],
        [0.0, 1000.0, 1000.0],
        [0.0, 0.0, 500.0],
    ]
)

DEFAULT_R_MIN = 1.0


def as_landmarks(landmarks):
    """Validate and return landmarks as an ``(n_L, 3)`` float array."""
    s = np.array(landmarks, dtype=float)
    if s.ndim != 2 or s.shape[1] != 3 or s.shape[0] < 1:
        raise ValueError(f"landmarks must have shape (n_L, 3), got {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError("landmark coordinates must be finite")
    return s


@dataclass(frozen=True)
class TruthState:
    t: float
    p: np.ndarray  # inertial position, m
    v: np.ndarray  # body velocity, m/s
    g: np.ndarray  # body gravity, m/s^2
    R: np.ndarray  # body-to-inertial rotation
    w: np.ndarray  # body angular rate, rad/s
    a: np.ndarray  # noise-free accelerometer reading, m/s^2
    euler: tuple = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class NoiseConfig:
    """Standard deviations of the additive white Gaussian sensor noise."""

    sigma_range: float = 1.0
    sigma_accel: float = 2e-3
    sigma_gyro: float = float(np.deg2rad(0.05))
    sigma_roll_pitch: float = float(np.deg2rad(0.03))
    sigma_yaw: float = float(np.deg2rad(0.3))
    seed: int = 0

    def __post_init__(self):
        for name in ("sigma_range", "sigma_accel", "sigma_gyro", "sigma_roll_pitch", "sigma_yaw"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")

    @classmethod
    def zero(cls, seed=0):
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, seed)

    @property
    def euler_sigmas(self):
        return np.array([self.sigma_roll_pitch, self.sigma_roll_pitch, self.sigma_yaw])


@dataclass(frozen=True)
class SensorFrame:
    """One sensor epoch. ``ranges`` is None at IMU-only epochs."""

    t: float
    ranges: Optional[np.ndarray]
    a_meas: np.ndarray
    w_meas: np.ndarray
    R_meas: np.ndarray


@dataclass(frozen=True)
class HelixTrajectory:
    """Helical survey: constant-rate turn with a steady descent.

    The vehicle starts at ``start`` and circles a vertical axis located
    ``radius`` metres to its +y side, with yaw following the horizontal
    velocity. Optional sinusoidal roll/pitch oscillations add attitude
    excitation.
    """

    radius: float = 20.0
    period: float = 100.0
    vertical_speed: float = 0.1
    start: tuple = (500.0, 480.0, 0.0)
    roll_amplitude: float = 0.0
    pitch_amplitude: float = 0.0
    attitude_period: float = 30.0
    g0: float = 9.8

    def __post_init__(self):
        if self.radius < 0 or self.period <= 0 or self.attitude_period <= 0:
            raise ValueError("radius must be >= 0 and periods > 0")
        if abs(self.pitch_amplitude) >= np.pi / 2:
            raise ValueError("pitch amplitude must stay inside (-pi/2, pi/2)")

    @property
    def turn_rate(self):
        return 2.0 * np.pi / self.period

    def sample(self, t):
        """Evaluate the trajectory at times ``t`` (array). Returns a dict of arrays."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        W = self.turn_rate
        rho = self.radius
        c = np.asarray(self.start, dtype=float) + np.array([0.0, rho, 0.0])

        sw, cw = np.sin(W * t), np.cos(W * t)
        zeros = np.zeros_like(t)
        p = np.stack([c[0] + rho * sw, c[1] - rho * cw, c[2] + self.vertical_speed * t], axis=-1)
        p_dot = np.stack([rho * W * cw, rho * W * sw, zeros + self.vertical_speed], axis=-1)
        p_ddot = np.stack([-rho * W**2 * sw, rho * W**2 * cw, zeros], axis=-1)

        Wa = 2.0 * np.pi / self.attitude_period
        roll = self.roll_amplitude * np.sin(Wa * t)
        roll_dot = self.roll_amplitude * Wa * np.cos(Wa * t)
        pitch = self.pitch_amplitude * np.cos(Wa * t)
        pitch_dot = -self.pitch_amplitude * Wa * np.sin(Wa * t)
        yaw = W * t
        yaw_dot = zeros + W

        R = euler_to_rotation_batch(roll, pitch, yaw)
        sr, cr = np.sin(roll), np.cos(roll)
        sp, cp = np.sin(pitch), np.cos(pitch)
        w = np.stack(
            [
                roll_dot - yaw_dot * sp,
                pitch_dot * cr + yaw_dot * cp * sr,
                -pitch_dot * sr + yaw_dot * cp * cr,
            ],
            axis=-1,
        )

        g_inertial = np.array([0.0, 0.0, self.g0])
        Rt = np.swapaxes(R, -1, -2)
        v = np.einsum("kij,kj->ki", Rt, p_dot)
        g = np.einsum("kij,j->ki", Rt, g_inertial)
        # a = dv/dt + w x v - g = R^T (p_ddot - g_I)
        a = np.einsum("kij,kj->ki", Rt, p_ddot - g_inertial)
        return {
            "t": t,
            "p": p,
            "v": v,
            "g": g,
            "R": R,
            "w": w,
            "a": a,
            "euler": np.stack([roll, pitch, yaw], axis=-1),
        }

    def state(self, t):
        s = self.sample([t])
        return TruthState(
            t=float(t),
            p=s["p"][0],
            v=s["v"][0],
            g=s["g"][0],
            R=s["R"][0],
            w=s["w"][0],
            a=s["a"][0],
            euler=tuple(s["euler"][0]),
        )


def default_trajectory(t, params=None):
    """Truth state of the default helical trajectory at time ``t``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    traj = params if params is not None else HelixTrajectory()
    return traj.state(t)


def true_ranges(p, landmarks):
    """Euclidean distance from position(s) ``p`` to each landmark."""
    p = np.asarray(p, dtype=float)
    return np.linalg.norm(landmarks - p[..., None, :], axis=-1)


def measure(truth, landmarks, noise, rng, r_min=DEFAULT_R_MIN, with_ranges=True):
    """Corrupt one truth sample with the configured sensor noise."""
    s = as_landmarks(landmarks)
    r = true_ranges(truth.p, s)
    if np.any(r < r_min):
        raise RangeTooSmall(r, r_min)
    ranges = r + noise.sigma_range * rng.standard_normal(r.shape) if with_ranges else None
    a_meas = truth.a + noise.sigma_accel * rng.standard_normal(3)
    w_meas = truth.w + noise.sigma_gyro * rng.standard_normal(3)
    e = np.asarray(truth.euler, dtype=float) + noise.euler_sigmas * rng.standard_normal(3)
    return SensorFrame(t=truth.t, ranges=ranges, a_meas=a_meas, w_meas=w_meas, R_meas=euler_to_rotation(e))


@dataclass
class SensorLog:
    """A full run: truth and noisy measurements at IMU and range epochs.

    IMU-rate arrays are indexed by ``k`` with ``t_imu[k] = k / imu_hz``; the
    range epoch ``j`` coincides with IMU index ``j * decimation``.
    """

    t_imu: np.ndarray
    a_meas: np.ndarray
    w_meas: np.ndarray
    R_meas: np.ndarray
    t_range: np.ndarray
    ranges: np.ndarray
    decimation: int
    truth: dict = field(repr=False)

    @property
    def n_imu(self):
        return self.t_imu.shape[0]

    def frame(self, k):
        ranges = None
        if k % self.decimation == 0:
            ranges = self.ranges[k // self.decimation]
        return SensorFrame(self.t_imu[k], ranges, self.a_meas[k], self.w_meas[k], self.R_meas[k])


def simulate(trajectory, landmarks, noise, imu_hz=100, range_hz=1, duration=600.0, rng=None, r_min=DEFAULT_R_MIN):
    """Sample a trajectory and generate the noisy sensor log.

    Noise draws happen in a fixed order (ranges, accelerometer, gyro,
    attitude), so a given generator state always yields the same log.
    """
    s = as_landmarks(landmarks)
    if imu_hz <= 0 or range_hz <= 0 or duration <= 0:
        raise ValueError("rates and duration must be positive")
    ratio = imu_hz / range_hz
    decimation = int(round(ratio))
    if abs(ratio - decimation) > 1e-9:
        raise ValueError("imu_hz must be an integer multiple of range_hz")
    if rng is None:
        rng = np.random.default_rng(noise.seed)

    n_imu = int(round(duration * imu_hz)) + 1
    t_imu = np.arange(n_imu) / imu_hz
    truth = trajectory.sample(t_imu)
    r_true = true_ranges(truth["p"], s)
    if np.any(r_true < r_min):
        raise RangeTooSmall(r_true.min(), r_min)

    idx_range = np.arange(0, n_imu, decimation)
    ranges = r_true[idx_range] + noise.sigma_range * rng.standard_normal((idx_range.size, s.shape[0]))
    a_meas = truth["a"] + noise.sigma_accel * rng.standard_normal((n_imu, 3))
    w_meas = truth["w"] + noise.sigma_gyro * rng.standard_normal((n_imu, 3))
    e = truth["euler"] + noise.euler_sigmas * rng.standard_normal((n_imu, 3))
    R_meas = euler_to_rotation_batch(e[:, 0], e[:, 1], e[:, 2])
    truth["ranges"] = r_true
    return SensorLog(
        t_imu=t_imu,
        a_meas=a_meas,
        w_meas=w_meas,
        R_meas=R_meas,
        t_range=t_imu[idx_range],
        ranges=ranges,
        decimation=decimation,
        truth=truth,
    )
