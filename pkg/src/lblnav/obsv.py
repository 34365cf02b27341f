"""Numerical observability analysis of the augmented LTV model.

The transition matrix is obtained by integrating ``dPhi/dt = A(t) Phi``
across the sample intervals of a recorded signal (input ``u = R a`` and
ranges, linearly interpolated between samples). The observability Gramian
is then accumulated with the trapezoidal rule on the same grid.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import IntegrationFailure
from .ltv import build_C_and_y, check_ranges, state_dim
from .truthsim import DEFAULT_R_MIN, as_landmarks, true_ranges

DEFAULT_TOL = 1e-12
MAX_DOUBLINGS = 12


def noncoplanar_check(landmarks, rel_tol=1e-9):
    """True iff the landmarks span 3-D space (some four of them are not coplanar)."""
    s = as_landmarks(landmarks)
    if s.shape[0] < 4:
        return False
    d = s[1:] - s[0]
    sv = np.linalg.svd(d, compute_uv=False)
    spread = np.abs(d).max()
    return bool(sv.size >= 3 and sv[2] > rel_tol * max(1.0, spread))


@dataclass(frozen=True)
class SignalRecord:
    """Sampled input ``u`` (inertial, m/s^2) and ranges on a strictly increasing grid."""

    t: np.ndarray
    u: np.ndarray
    ranges: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
            raise ValueError("signal times must be strictly increasing with at least two samples")
        if self.u.shape != (t.size, 3) or self.ranges.shape[0] != t.size:
            raise ValueError("signal arrays do not match the time grid")

    def at(self, t):
        """Linear interpolation of ``(u, ranges)`` at a scalar time."""
        if t < self.t[0] or t > self.t[-1]:
            raise ValueError(f"t={t} outside the recorded interval")
        k = int(np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, self.t.size - 2))
        f = (t - self.t[k]) / (self.t[k + 1] - self.t[k])
        u = self.u[k] + f * (self.u[k + 1] - self.u[k])
        r = self.ranges[k] + f * (self.ranges[k + 1] - self.ranges[k])
        return u, r

    def grid(self, t0, tf):
        """Sample times inside ``(t0, tf)`` bracketed by ``t0`` and ``tf``."""
        inner = self.t[(self.t > t0) & (self.t < tf)]
        return np.concatenate([[t0], inner, [tf]])


def signals_from_truth(truth, landmarks):
    """Noise-free signal record from :meth:`HelixTrajectory.sample` output."""
    s = as_landmarks(landmarks)
    u = np.einsum("kij,kj->ki", truth["R"], truth["a"])
    return SignalRecord(t=np.asarray(truth["t"], dtype=float), u=u, ranges=true_ranges(truth["p"], s))


def signals_from_log(log):
    """Signal record from a sensor log, using measured attitude and acceleration.

    Ranges exist only at range epochs, so they are linearly interpolated
    onto the IMU grid.
    """
    u = np.einsum("kij,kj->ki", log.R_meas, log.a_meas)
    r = np.stack([np.interp(log.t_imu, log.t_range, log.ranges[:, i]) for i in range(log.ranges.shape[1])], axis=1)
    return SignalRecord(t=log.t_imu, u=u, ranges=r)


def _interval_transitions(grid, signals, s, tol, r_min):
    us = np.empty((grid.size, 3))
    rs = np.empty((grid.size, s.shape[0]))
    for k, tk in enumerate(grid):
        us[k], rs[k] = signals.at(tk)
    check_ranges(rs, r_min)
    Phis, _, ok = kernels.interval_transitions(grid, us, rs, s, tol, MAX_DOUBLINGS)
    if not ok:
        raise IntegrationFailure(f"transition matrix did not reach tolerance {tol:g}")
    return Phis, rs


def transition_matrix(t0, tf, signals, landmarks, tol=DEFAULT_TOL, r_min=DEFAULT_R_MIN):
    """``Phi(tf, t0)`` of the transformed augmented model along ``signals``."""
    s = as_landmarks(landmarks)
    n = state_dim(s.shape[0])
    if tf < t0:
        raise ValueError("tf must not precede t0")
    if tf == t0:
        return np.eye(n)
    Phis, _ = _interval_transitions(signals.grid(t0, tf), signals, s, tol, r_min)
    Phi = np.eye(n)
    for M in Phis:
        Phi = M @ Phi
    return Phi


def phi_aa_closed_form(dt):
    """Closed-form transition of the position/velocity/gravity integrator chain."""
    I = np.eye(3)
    Z = np.zeros((3, 3))
    return np.block([[I, dt * I, 0.5 * dt**2 * I], [Z, I, dt * I], [Z, Z, I]])


def iterated_input_integrals(t, u):
    """First and second iterated integrals of ``u`` from ``t[0]`` (trapezoidal)."""
    t = np.asarray(t, dtype=float)
    u = np.asarray(u, dtype=float)
    dt = np.diff(t)[:, None]
    u1 = np.vstack([np.zeros(3), np.cumsum(0.5 * dt * (u[1:] + u[:-1]), axis=0)])
    u2 = np.vstack([np.zeros(3), np.cumsum(0.5 * dt * (u1[1:] + u1[:-1]), axis=0)])
    return u1, u2


@dataclass(frozen=True)
class GramianReport:
    W: np.ndarray
    min_eigenvalue: float
    max_eigenvalue: float
    condition_number: float
    interval: tuple

    def to_dict(self, include_matrix=True):
        out = {
            "interval": list(self.interval),
            "min_eigenvalue": self.min_eigenvalue,
            "max_eigenvalue": self.max_eigenvalue,
            "condition_number": self.condition_number if np.isfinite(self.condition_number) else None,
            "positive_definite": bool(self.min_eigenvalue > 0),
        }
        if include_matrix:
            out["W"] = self.W.tolist()
        return out


def _report(W, t0, tf):
    Ws = 0.5 * (W + W.T)
    eig = np.linalg.eigvalsh(Ws)
    lo, hi = float(eig[0]), float(eig[-1])
    cond = hi / lo if lo > 0 else float("inf")
    return GramianReport(W=Ws, min_eigenvalue=lo, max_eigenvalue=hi, condition_number=cond, interval=(float(t0), float(tf)))


def _accumulate(grid, Phis, rs, s):
    n = state_dim(s.shape[0])
    W = np.zeros((n, n))
    Phi = np.eye(n)
    h = np.diff(grid)
    weights = np.zeros(grid.size)
    weights[:-1] += 0.5 * h
    weights[1:] += 0.5 * h
    for k in range(grid.size):
        if k > 0:
            Phi = Phis[k - 1] @ Phi
        C, _ = build_C_and_y(rs[k], s)
        CP = C @ Phi
        W += weights[k] * (CP.T @ CP)
    return W


def gramian(t0, tf, signals, landmarks, tol=DEFAULT_TOL, r_min=DEFAULT_R_MIN):
    """Observability Gramian of the transformed model over ``[t0, tf]``."""
    s = as_landmarks(landmarks)
    n = state_dim(s.shape[0])
    if tf < t0:
        raise ValueError("tf must not precede t0")
    if tf == t0:
        return _report(np.zeros((n, n)), t0, tf)
    grid = signals.grid(t0, tf)
    Phis, rs = _interval_transitions(grid, signals, s, tol, r_min)
    return _report(_accumulate(grid, Phis, rs, s), t0, tf)


def window_gramians(signals, landmarks, window, t_start=None, t_end=None, tol=DEFAULT_TOL, r_min=DEFAULT_R_MIN):
    """Gramians over consecutive non-overlapping windows of length ``window``.

    Interval transitions are computed once for the whole span and reused,
    so this is much cheaper than calling :func:`gramian` per window.
    """
    s = as_landmarks(landmarks)
    t_start = signals.t[0] if t_start is None else t_start
    t_end = signals.t[-1] if t_end is None else t_end
    n_win = int(np.floor((t_end - t_start) / window + 1e-9))
    edges = t_start + window * np.arange(n_win + 1)
    grid = np.union1d(signals.grid(t_start, t_end), edges)
    Phis, rs = _interval_transitions(grid, signals, s, tol, r_min)
    reports = []
    for w in range(n_win):
        lo = int(np.searchsorted(grid, edges[w] - 1e-12))
        hi = int(np.searchsorted(grid, edges[w + 1] - 1e-12))
        W = _accumulate(grid[lo : hi + 1], Phis[lo:hi], rs[lo : hi + 1], s)
        reports.append(_report(W, edges[w], edges[w + 1]))
    return reports
