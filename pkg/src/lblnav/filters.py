"""Navigation filters: the augmented range-based Kalman filter and two baselines.

* :class:`AugmentedFilter` - the (13 + n_L)-state filter built on the
  augmented LTV model. Position is inertial, velocity and gravity are in
  body axes.
* :class:`RangeEKF` - 9-state EKF on the transformed model with the raw
  range outputs.
* :class:`AlgebraicKF` - 9-state linear KF fed with trilaterated positions.

All three are continuous-discrete: the mean is propagated by RK4 at the
IMU rate and corrected at range epochs.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from . import kernels
from .errors import DegenerateGeometry, DivergenceDetected, RangeTooSmall, SingularInnovation
from .geo3d import _expm_so3
from .ltv import build_C_and_y, check_ranges, pair_indices, state_dim
from .truthsim import DEFAULT_R_MIN, as_landmarks

DEFAULT_GRAVITY_INIT = (0.0, 0.0, 10.0)


@dataclass(frozen=True)
class NavEstimate:
    t: float
    p_hat: np.ndarray  # inertial, m
    v_hat: np.ndarray  # body, m/s
    g_hat: np.ndarray  # body, m/s^2


@dataclass
class AugmentedState:
    chi: np.ndarray
    P: np.ndarray
    t: float = 0.0
    innovation: Optional[np.ndarray] = None


def default_initial_covariance(n_landmarks):
    """Diagonal initial covariance for the default initialization.

    Standard deviations: 2000 m position, 5 m/s velocity, 1 m/s^2 gravity,
    1 m per range state, and (1e4, 1e4, 1e2, 10) for the inner-product
    states, which bound their initial errors for positions within 2 km of
    the origin and speeds of a few m/s.
    """
    return np.diag(
        np.concatenate(
            [
                np.full(3, 2000.0**2),
                np.full(3, 5.0**2),
                np.full(3, 1.0),
                np.full(n_landmarks, 1.0),
                [1e4**2, 1e4**2, 1e2**2, 10.0**2],
            ]
        )
    )


@dataclass
class FilterTuning:
    """Noise intensities for the augmented filter.

    ``Qx`` and ``Qy`` are continuous-time intensities; they become
    covariances by multiplying with the IMU step and dividing by the
    range sampling interval ``range_dt`` respectively.
    """

    Qx: np.ndarray
    Qy: np.ndarray
    P0: np.ndarray
    range_dt: float = 1.0
    r_min: float = DEFAULT_R_MIN

    def __post_init__(self):
        self.Qx = np.atleast_2d(np.asarray(self.Qx, dtype=float))
        self.Qy = np.atleast_2d(np.asarray(self.Qy, dtype=float))
        self.P0 = np.atleast_2d(np.asarray(self.P0, dtype=float))
        n = self.Qx.shape[0]
        if self.Qx.shape != (n, n) or self.P0.shape != (n, n):
            raise ValueError("Qx and P0 must be square with the state dimension")
        for name, M in (("Qx", self.Qx), ("Qy", self.Qy), ("P0", self.P0)):
            if not np.allclose(M, M.T):
                raise ValueError(f"{name} must be symmetric")
        if np.linalg.eigvalsh(self.Qx).min() < -1e-12:
            raise ValueError("Qx must be positive semidefinite")
        if np.linalg.eigvalsh(self.Qy).min() <= 0:
            raise ValueError("Qy must be positive definite")
        if self.range_dt <= 0 or self.r_min <= 0:
            raise ValueError("range_dt and r_min must be positive")

    @classmethod
    def default(cls, n_landmarks, range_dt=1.0, qx=1e-5, range_weight=1.0, pair_weight=2.0, r_min=DEFAULT_R_MIN):
        n_pairs = len(pair_indices(n_landmarks))
        Qy = np.diag(np.concatenate([np.full(n_landmarks, range_weight), np.full(n_pairs, pair_weight)]))
        return cls(
            Qx=qx * np.eye(state_dim(n_landmarks)),
            Qy=Qy,
            P0=default_initial_covariance(n_landmarks),
            range_dt=range_dt,
            r_min=r_min,
        )


def _raise_for(status, state_vec, r_min, n_l):
    if status == kernels.RANGE_TOO_SMALL:
        raise RangeTooSmall(state_vec[9 : 9 + n_l], r_min)
    if status == kernels.DIVERGED:
        raise DivergenceDetected("filter state exceeded the divergence bound")


def _check_finite_bounded(x):
    if not np.all(np.abs(x) <= kernels.DIVERGENCE_BOUND):
        raise DivergenceDetected("filter state exceeded the divergence bound")


def _kalman_correct(x, P, H, innov, Rm):
    S = H @ P @ H.T + Rm
    try:
        factor = cho_factor(S)
    except LinAlgError as exc:
        raise SingularInnovation(str(exc)) from exc
    PHt = P @ H.T
    K = cho_solve(factor, PHt.T).T
    x_new = x + K @ innov
    I_KH = np.eye(P.shape[0]) - K @ H
    P_new = I_KH @ P @ I_KH.T + K @ Rm @ K.T
    return x_new, 0.5 * (P_new + P_new.T)


def init_filter(first_frame, landmarks, tuning, p0=(0.0, 0.0, 0.0), v0=(0.0, 0.0, 0.0), g0=DEFAULT_GRAVITY_INIT):
    """Initial augmented state.

    Position and velocity default to zero and gravity to ``(0, 0, 10)``.
    Range states take the first measured ranges, the inner-product states
    start at zero except ``|g|^2``, which is set consistently with ``g0``.
    """
    s = as_landmarks(landmarks)
    n_l = s.shape[0]
    ranges = check_ranges(first_frame.ranges, tuning.r_min)
    g0 = np.asarray(g0, dtype=float)
    chi = np.concatenate([p0, v0, g0, ranges, [0.0, 0.0, 0.0, float(g0 @ g0)]]).astype(float)
    if chi.shape[0] != state_dim(n_l):
        raise ValueError("landmark count does not match the measurement")
    return AugmentedState(chi=chi, P=tuning.P0.copy(), t=float(first_frame.t))


def predict(state, a_meas, w_meas, R_meas, dt, landmarks, tuning):
    """Propagate the augmented state over ``dt`` with one IMU/AHRS sample."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    s = as_landmarks(landmarks)
    chi, P, status = kernels.augmented_step(
        state.chi,
        state.P,
        np.asarray(a_meas, dtype=float),
        np.asarray(w_meas, dtype=float),
        np.ascontiguousarray(R_meas, dtype=float),
        float(dt),
        s,
        tuning.Qx,
        tuning.r_min,
    )
    _raise_for(status, state.chi, tuning.r_min, s.shape[0])
    return AugmentedState(chi=chi, P=P, t=state.t + dt)


def predict_many(state, a_meas, w_meas, R_meas, dt, landmarks, tuning):
    """Run :func:`predict` over consecutive IMU samples inside one kernel call."""
    s = as_landmarks(landmarks)
    a = np.ascontiguousarray(a_meas, dtype=float)
    chi, P, status, done = kernels.augmented_steps(
        state.chi,
        state.P,
        a,
        np.ascontiguousarray(w_meas, dtype=float),
        np.ascontiguousarray(R_meas, dtype=float),
        float(dt),
        s,
        tuning.Qx,
        tuning.r_min,
    )
    _raise_for(status, chi, tuning.r_min, s.shape[0])
    return AugmentedState(chi=chi, P=P, t=state.t + dt * a.shape[0])


def update(state, frame, landmarks, tuning):
    """Correct the augmented state with the range outputs of ``frame``."""
    s = as_landmarks(landmarks)
    C, y = build_C_and_y(frame.ranges, s, tuning.r_min)
    innov = y - C @ state.chi
    chi, P = _kalman_correct(state.chi, state.P, C, innov, tuning.Qy / tuning.range_dt)
    _check_finite_bounded(chi)
    return AugmentedState(chi=chi, P=P, t=state.t, innovation=innov)


def extract_nav(state):
    chi = state.chi
    return NavEstimate(t=state.t, p_hat=chi[0:3].copy(), v_hat=chi[3:6].copy(), g_hat=chi[6:9].copy())


def trilaterate(ranges, landmarks, cond_limit=1e12):
    """Algebraic position fix from ranges.

    Differencing squared ranges against the first landmark gives the linear
    system ``2 (s_i - s_1).p = |s_i|^2 - |s_1|^2 - r_i^2 + r_1^2`` solved in
    least squares.
    """
    s = as_landmarks(landmarks)
    r = np.asarray(ranges, dtype=float)
    if s.shape[0] < 4:
        raise DegenerateGeometry("at least 4 landmarks are needed")
    A = 2.0 * (s[1:] - s[0])
    sq = np.einsum("ij,ij->i", s, s)
    b = sq[1:] - sq[0] - r[1:] ** 2 + r[0] ** 2
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] <= sv[0] / cond_limit:
        raise DegenerateGeometry("landmarks are coplanar")
    p, *_ = np.linalg.lstsq(A, b, rcond=None)
    return p


class AugmentedFilter:
    """Stateful driver around :func:`init_filter`, :func:`predict` and :func:`update`."""

    name = "proposed"

    def __init__(self, landmarks, tuning=None):
        self.landmarks = as_landmarks(landmarks)
        self.n_landmarks = self.landmarks.shape[0]
        self.tuning = tuning if tuning is not None else FilterTuning.default(self.n_landmarks)
        self.state = None

    def initialize(self, frame, p0=(0.0, 0.0, 0.0), v0=(0.0, 0.0, 0.0), g0=DEFAULT_GRAVITY_INIT):
        self.state = init_filter(frame, self.landmarks, self.tuning, p0, v0, g0)

    def predict(self, a_meas, w_meas, R_meas, dt):
        self.state = predict(self.state, a_meas, w_meas, R_meas, dt, self.landmarks, self.tuning)

    def propagate(self, a_meas, w_meas, R_meas, dt):
        self.state = predict_many(self.state, a_meas, w_meas, R_meas, dt, self.landmarks, self.tuning)

    def update(self, frame):
        self.state = update(self.state, frame, self.landmarks, self.tuning)

    @property
    def innovation(self):
        return self.state.innovation

    def nav(self, R=None):
        return extract_nav(self.state)

    def range_estimates(self, R=None):
        return self.state.chi[9 : 9 + self.n_landmarks].copy()

    def restriction_residuals(self, R):
        """``(x4 - |s_1 - p|, s8 - p.(R v))`` for the current estimate."""
        chi = self.state.chi
        p, v = chi[0:3], chi[3:6]
        res_r1 = chi[9] - np.linalg.norm(self.landmarks[0] - p)
        res_s8 = chi[9 + self.n_landmarks] - p @ (np.asarray(R) @ v)
        return float(res_r1), float(res_s8)


@dataclass
class ChainTuning:
    Q: np.ndarray = field(default_factory=lambda: 1e-5 * np.eye(9))
    R: np.ndarray = field(default_factory=lambda: np.eye(4))
    P0: np.ndarray = field(default_factory=lambda: np.diag([2000.0**2] * 3 + [5.0**2] * 3 + [1.0] * 3))
    range_dt: float = 1.0


class _ChainFilter:
    """Shared prediction for the 9-state baselines (transformed coordinates)."""

    def __init__(self, landmarks, tuning):
        self.landmarks = as_landmarks(landmarks)
        self.n_landmarks = self.landmarks.shape[0]
        self.tuning = tuning
        self.x = None
        self.P = None
        self.t = 0.0
        self.innovation = None

    def initialize(self, frame, p0=(0.0, 0.0, 0.0), v0=(0.0, 0.0, 0.0), g0=DEFAULT_GRAVITY_INIT):
        R = np.asarray(frame.R_meas, dtype=float)
        self.x = np.concatenate([np.asarray(p0, float), R @ np.asarray(v0, float), R @ np.asarray(g0, float)])
        self.P = np.array(self.tuning.P0, dtype=float)
        self.t = float(frame.t)

    def predict(self, a_meas, w_meas, R_meas, dt):
        self.propagate(np.atleast_2d(a_meas), np.atleast_2d(w_meas), np.asarray(R_meas).reshape(1, 3, 3), dt)

    def propagate(self, a_meas, w_meas, R_meas, dt):
        a = np.ascontiguousarray(a_meas, dtype=float)
        x, P, status, _ = kernels.chain_steps(
            self.x,
            self.P,
            a,
            np.ascontiguousarray(w_meas, dtype=float),
            np.ascontiguousarray(R_meas, dtype=float),
            float(dt),
            np.asarray(self.tuning.Q, dtype=float),
        )
        if status != kernels.OK:
            raise DivergenceDetected("filter state exceeded the divergence bound")
        self.x, self.P = x, P
        self.t += dt * a.shape[0]

    def _correct(self, H, innov, Rm):
        x, P = _kalman_correct(self.x, self.P, H, innov, Rm)
        _check_finite_bounded(x)
        self.x, self.P, self.innovation = x, P, innov

    def nav(self, R):
        """Estimate with velocity and gravity rotated into body axes by ``R``."""
        R = np.asarray(R, dtype=float)
        return NavEstimate(t=self.t, p_hat=self.x[0:3].copy(), v_hat=R.T @ self.x[3:6], g_hat=R.T @ self.x[6:9])

    def range_estimates(self, R=None):
        return np.linalg.norm(self.landmarks - self.x[0:3], axis=1)

    def restriction_residuals(self, R):
        # ranges are derived from the position estimate, so these hold exactly
        return 0.0, 0.0


def range_jacobian(x1, landmarks):
    """Rows ``-(s_i - x1)^T / |s_i - x1|``: derivative of each range w.r.t. position."""
    d = as_landmarks(landmarks) - np.asarray(x1, dtype=float)
    r = np.linalg.norm(d, axis=1)
    return -d / r[:, None], r


class RangeEKF(_ChainFilter):
    """Extended Kalman filter with the nonlinear range outputs.

    The EKF is only locally convergent, so by default its position starts
    at the trilateration fix of the first range set instead of ``p0``.
    """

    name = "ekf"

    def __init__(self, landmarks, tuning=None, init_from_fix=True):
        s = as_landmarks(landmarks)
        if tuning is None:
            tuning = ChainTuning(R=np.eye(s.shape[0]))
        super().__init__(s, tuning)
        self.init_from_fix = init_from_fix

    def initialize(self, frame, p0=(0.0, 0.0, 0.0), v0=(0.0, 0.0, 0.0), g0=DEFAULT_GRAVITY_INIT):
        if self.init_from_fix and frame.ranges is not None:
            try:
                p0 = trilaterate(frame.ranges, self.landmarks)
            except DegenerateGeometry:
                pass
        super().initialize(frame, p0, v0, g0)

    def update(self, frame):
        J, r_hat = range_jacobian(self.x[0:3], self.landmarks)
        if np.any(r_hat < DEFAULT_R_MIN):
            raise RangeTooSmall(r_hat, DEFAULT_R_MIN)
        H = np.zeros((self.n_landmarks, 9))
        H[:, 0:3] = J
        innov = np.asarray(frame.ranges, dtype=float) - r_hat
        self._correct(H, innov, np.asarray(self.tuning.R, dtype=float) / self.tuning.range_dt)


class AlgebraicKF(_ChainFilter):
    """Linear KF whose position measurement comes from :func:`trilaterate`."""

    name = "algebraic"

    def __init__(self, landmarks, tuning=None):
        if tuning is None:
            tuning = ChainTuning(R=4.0 * np.eye(3))
        super().__init__(landmarks, tuning)
        self.H = np.hstack([np.eye(3), np.zeros((3, 6))])

    def update(self, frame):
        z = trilaterate(frame.ranges, self.landmarks)
        innov = z - self.x[0:3]
        self._correct(self.H, innov, np.asarray(self.tuning.R, dtype=float) / self.tuning.range_dt)


def ekf_step(ekf, frame, dt):
    """Correct with ``frame``'s ranges (if any), then predict over ``dt``.

    Returns the estimate at ``frame.t + dt``.
    """
    if frame.ranges is not None:
        ekf.update(frame)
    ekf.predict(frame.a_meas, frame.w_meas, frame.R_meas, dt)
    return ekf.nav(frame.R_meas @ _expm_so3(np.asarray(frame.w_meas, float), float(dt)))


def linear_kf_step(kf, frame, dt):
    """Same as :func:`ekf_step` for the trilateration-fed linear filter."""
    return ekf_step(kf, frame, dt)


FILTERS = {
    AugmentedFilter.name: AugmentedFilter,
    RangeEKF.name: RangeEKF,
    AlgebraicKF.name: AlgebraicKF,
}
