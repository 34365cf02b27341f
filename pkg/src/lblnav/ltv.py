"""Augmented linear time-varying model of the range-based navigation problem.

State layout (``n = 13 + n_L``), shared by every module::

    [0:3]        x1   position (inertial)
    [3:6]        x2   velocity (inertial in the transformed model, body in the filter)
    [6:9]        x3   gravity  (same frame as x2)
    [9:9+n_L]    ranges to each landmark
    [9+n_L]      s8  = x1.x2
    [10+n_L]     s9  = x1.x3 + |x2|^2
    [11+n_L]     s10 = x2.x3
    [12+n_L]     s11 = |x3|^2

Outputs are the ``n_L`` ranges followed by one row per landmark pair
``(i, j)``, ``i < j``, in lexicographic order.
"""

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np

from ._jit import jit
from .errors import RangeTooSmall
from .geo3d import _skew
from .truthsim import DEFAULT_R_MIN, as_landmarks


def state_dim(n_landmarks):
    return 13 + n_landmarks


def output_dim(n_landmarks):
    return n_landmarks + n_landmarks * (n_landmarks - 1) // 2


@lru_cache(maxsize=None)
def pair_indices(n_landmarks):
    """Landmark pairs ``(i, j)``, ``i < j``, zero based, lexicographic."""
    return tuple(combinations(range(n_landmarks), 2))


def pair_difference_matrix(n_landmarks):
    """Matrix whose rows difference every pair of ranges (``+1`` on i, ``-1`` on j)."""
    pairs = pair_indices(n_landmarks)
    C2 = np.zeros((len(pairs), n_landmarks))
    for row, (i, j) in enumerate(pairs):
        C2[row, i] = 1.0
        C2[row, j] = -1.0
    return C2


def check_ranges(ranges, r_min=DEFAULT_R_MIN):
    ranges = np.asarray(ranges, dtype=float)
    if not np.all(ranges >= r_min):
        raise RangeTooSmall(ranges, r_min)
    return ranges


@dataclass(frozen=True)
class LiftedState:
    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray
    range_states: np.ndarray
    s8: float
    s9: float
    s10: float
    s11: float

    def as_vector(self):
        return np.concatenate(
            [self.x1, self.x2, self.x3, self.range_states, [self.s8, self.s9, self.s10, self.s11]]
        )


def lift_state(x1, x2, x3, landmarks, r_min=DEFAULT_R_MIN):
    """Augment ``(x1, x2, x3)`` with ranges and the four inner-product states."""
    s = as_landmarks(landmarks)
    x1, x2, x3 = (np.asarray(x, dtype=float) for x in (x1, x2, x3))
    ranges = check_ranges(np.linalg.norm(s - x1, axis=1), r_min)
    return LiftedState(
        x1=x1,
        x2=x2,
        x3=x3,
        range_states=ranges,
        s8=float(x1 @ x2),
        s9=float(x1 @ x3 + x2 @ x2),
        s10=float(x2 @ x3),
        s11=float(x3 @ x3),
    )


def lift_body_state(p, v, g, R, landmarks, r_min=DEFAULT_R_MIN):
    """Filter-coordinate lift: position inertial, velocity and gravity in body axes.

    The inner-product states are frame invariant, so they are evaluated from
    the inertial ``R v`` and ``R g``.
    """
    R = np.asarray(R, dtype=float)
    v = np.asarray(v, dtype=float)
    g = np.asarray(g, dtype=float)
    lifted = lift_state(p, R @ v, R @ g, landmarks, r_min)
    return np.concatenate(
        [lifted.x1, v, g, lifted.range_states, [lifted.s8, lifted.s9, lifted.s10, lifted.s11]]
    )


def restriction_residuals(x, landmarks):
    """Violation of the algebraic relations tying the augmented states to (x1, x2, x3).

    ``x`` is a transformed-coordinate augmented vector. Returns
    ``(range residuals, [s8, s9, s10, s11] residuals)``.
    """
    s = as_landmarks(landmarks)
    n_l = s.shape[0]
    x1, x2, x3 = x[0:3], x[3:6], x[6:9]
    r = x[9 : 9 + n_l]
    sc = x[9 + n_l : 13 + n_l]
    res_r = r - np.linalg.norm(s - x1, axis=1)
    res_s = sc - np.array([x1 @ x2, x1 @ x3 + x2 @ x2, x2 @ x3, x3 @ x3])
    return res_r, res_s


@jit
def _transformed_A(u, ranges, s):
    n_l = s.shape[0]
    n = 13 + n_l
    i8 = 9 + n_l
    A = np.zeros((n, n))
    for k in range(3):
        A[k, 3 + k] = 1.0
        A[3 + k, 6 + k] = 1.0
    for i in range(n_l):
        for k in range(3):
            A[9 + i, 3 + k] = -s[i, k] / ranges[i]
        A[9 + i, i8] = 1.0 / ranges[i]
    for k in range(3):
        A[i8, k] = u[k]
        A[i8 + 1, 3 + k] = 2.0 * u[k]
        A[i8 + 2, 6 + k] = u[k]
    A[i8, i8 + 1] = 1.0
    A[i8 + 1, i8 + 2] = 3.0
    A[i8 + 2, i8 + 3] = 1.0
    return A


@jit
def _body_A(a, w, R, ranges, s):
    n_l = s.shape[0]
    n = 13 + n_l
    i8 = 9 + n_l
    A = np.zeros((n, n))
    Sw = _skew(w)
    sR = s @ R
    Ra = R @ a
    for r in range(3):
        for c in range(3):
            A[r, 3 + c] = R[r, c]
            A[3 + r, 3 + c] = -Sw[r, c]
            A[6 + r, 6 + c] = -Sw[r, c]
        A[3 + r, 6 + r] = 1.0
    for i in range(n_l):
        for k in range(3):
            A[9 + i, 3 + k] = -sR[i, k] / ranges[i]
        A[9 + i, i8] = 1.0 / ranges[i]
    for k in range(3):
        A[i8, k] = Ra[k]
        A[i8 + 1, 3 + k] = 2.0 * a[k]
        A[i8 + 2, 6 + k] = a[k]
    A[i8, i8 + 1] = 1.0
    A[i8 + 1, i8 + 2] = 3.0
    A[i8 + 2, i8 + 3] = 1.0
    return A


def build_A(u, ranges, landmarks, r_min=DEFAULT_R_MIN):
    """System matrix of the transformed augmented model for input ``u = R a``."""
    s = as_landmarks(landmarks)
    ranges = check_ranges(ranges, r_min)
    return _transformed_A(np.asarray(u, dtype=float), ranges, s)


def build_B(n_landmarks):
    """Input matrix: the input drives the velocity rows only."""
    B = np.zeros((state_dim(n_landmarks), 3))
    B[3:6] = np.eye(3)
    return B


def build_body_A(a_meas, w_meas, R_meas, ranges_meas, landmarks, r_min=DEFAULT_R_MIN):
    """System matrix in filter coordinates (velocity and gravity in body axes)."""
    s = as_landmarks(landmarks)
    ranges = check_ranges(ranges_meas, r_min)
    return _body_A(
        np.asarray(a_meas, dtype=float),
        np.asarray(w_meas, dtype=float),
        np.ascontiguousarray(R_meas, dtype=float),
        ranges,
        s,
    )


def build_C_and_y(ranges_meas, landmarks, r_min=DEFAULT_R_MIN):
    """Output matrix and the known output vector for one set of measured ranges.

    Each pair row encodes
    ``2 (s_i - s_j).x1 / (r_i + r_j) + r_i - r_j = (|s_i|^2 - |s_j|^2) / (r_i + r_j)``
    with the measured ranges in the denominators.
    """
    s = as_landmarks(landmarks)
    r = check_ranges(ranges_meas, r_min)
    n_l = s.shape[0]
    pairs = pair_indices(n_l)
    C = np.zeros((output_dim(n_l), state_dim(n_l)))
    y = np.empty(output_dim(n_l))
    C[:n_l, 9 : 9 + n_l] = np.eye(n_l)
    y[:n_l] = r
    sq = np.einsum("ij,ij->i", s, s)
    for row, (i, j) in enumerate(pairs, start=n_l):
        denom = r[i] + r[j]
        C[row, 0:3] = 2.0 * (s[i] - s[j]) / denom
        C[row, 9 + i] = 1.0
        C[row, 9 + j] = -1.0
        y[row] = (sq[i] - sq[j]) / denom
    return C, y
