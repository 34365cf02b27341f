"""Hot loops: filter propagation and transition-matrix integration.

Every kernel is numba compiled unless ``LBLNAV_DISABLE_JIT`` is set, in which
case the identical source runs as numpy code. Kernels report problems via
integer status codes; the Python callers turn them into exceptions.
"""

import numpy as np

from ._jit import jit
from .geo3d import _expm_so3
from .ltv import _body_A, _transformed_A

OK = 0
RANGE_TOO_SMALL = 1
DIVERGED = 2

DIVERGENCE_BOUND = 1e9


@jit
def _cross(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@jit
def aug_deriv(chi, a, w, R, s):
    """Right-hand side of the filter-coordinate augmented model (noise free)."""
    n_l = s.shape[0]
    i8 = 9 + n_l
    p = chi[0:3]
    v = chi[3:6]
    g = chi[6:9]
    d = np.zeros(chi.shape[0])
    Rv = R @ v
    d[0:3] = Rv
    d[3:6] = a - _cross(w, v) + g
    d[6:9] = -_cross(w, g)
    s8 = chi[i8]
    for i in range(n_l):
        d[9 + i] = (s8 - (s[i, 0] * Rv[0] + s[i, 1] * Rv[1] + s[i, 2] * Rv[2])) / chi[9 + i]
    Ra = R @ a
    d[i8] = Ra[0] * p[0] + Ra[1] * p[1] + Ra[2] * p[2] + chi[i8 + 1]
    d[i8 + 1] = 2.0 * (a[0] * v[0] + a[1] * v[1] + a[2] * v[2]) + 3.0 * chi[i8 + 2]
    d[i8 + 2] = a[0] * g[0] + a[1] * g[1] + a[2] * g[2] + chi[i8 + 3]
    d[i8 + 3] = 0.0
    return d


@jit
def _min_range(chi, n_l):
    m = np.inf
    for i in range(n_l):
        if chi[9 + i] < m:
            m = chi[9 + i]
    return m


@jit
def _bounded(x):
    for k in range(x.shape[0]):
        if not (abs(x[k]) <= DIVERGENCE_BOUND):
            return False
    return True


@jit
def augmented_step(chi, P, a, w, R, dt, s, Qx, r_min):
    """One prediction step of the augmented filter.

    Mean: RK4, with the attitude advanced inside the step by the measured
    rate and the range denominators taken from each stage. Covariance:
    second-order transition ``I + A dt + (A dt)^2 / 2`` and ``Qx dt``.
    Returns ``(chi, P, status)``.
    """
    n_l = s.shape[0]
    n = chi.shape[0]
    if _min_range(chi, n_l) < r_min:
        return chi, P, RANGE_TOO_SMALL
    R_half = R @ _expm_so3(w, 0.5 * dt)
    R_end = R @ _expm_so3(w, dt)
    k1 = aug_deriv(chi, a, w, R, s)
    c2 = chi + 0.5 * dt * k1
    if _min_range(c2, n_l) < r_min:
        return chi, P, RANGE_TOO_SMALL
    k2 = aug_deriv(c2, a, w, R_half, s)
    c3 = chi + 0.5 * dt * k2
    if _min_range(c3, n_l) < r_min:
        return chi, P, RANGE_TOO_SMALL
    k3 = aug_deriv(c3, a, w, R_half, s)
    c4 = chi + dt * k3
    if _min_range(c4, n_l) < r_min:
        return chi, P, RANGE_TOO_SMALL
    k4 = aug_deriv(c4, a, w, R_end, s)
    chi_new = chi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    Adt = _body_A(a, w, R, chi[9 : 9 + n_l], s) * dt
    Phi = np.eye(n) + Adt + 0.5 * (Adt @ Adt)
    P_new = Phi @ P @ Phi.T + Qx * dt
    P_new = 0.5 * (P_new + P_new.T)
    if not _bounded(chi_new):
        return chi_new, P_new, DIVERGED
    return chi_new, P_new, OK


@jit
def augmented_steps(chi, P, a, w, R, dt, s, Qx, r_min):
    """Apply :func:`augmented_step` over rows of ``a``, ``w`` and ``R``.

    Returns ``(chi, P, status, steps_done)``.
    """
    for k in range(a.shape[0]):
        chi_n, P_n, status = augmented_step(chi, P, a[k], w[k], R[k], dt, s, Qx, r_min)
        if status != OK:
            return chi_n, P_n, status, k
        chi = chi_n
        P = P_n
    return chi, P, OK, a.shape[0]


@jit
def _chain_deriv(x, u):
    d = np.empty(9)
    d[0:3] = x[3:6]
    d[3:6] = x[6:9] + u
    d[6:9] = 0.0
    return d


@jit
def chain_step(x, P, a, w, R, dt, Q):
    """Prediction for the 9-state integrator chain driven by ``u = R a``.

    Same discretization as :func:`augmented_step`. The chain matrix is
    nilpotent of order three, so the second-order transition is exact.
    """
    R_half = R @ _expm_so3(w, 0.5 * dt)
    R_end = R @ _expm_so3(w, dt)
    u1 = R @ a
    u2 = R_half @ a
    u4 = R_end @ a
    k1 = _chain_deriv(x, u1)
    k2 = _chain_deriv(x + 0.5 * dt * k1, u2)
    k3 = _chain_deriv(x + 0.5 * dt * k2, u2)
    k4 = _chain_deriv(x + dt * k3, u4)
    x_new = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    Phi = np.eye(9)
    for k in range(6):
        Phi[k, k + 3] = dt
    for k in range(3):
        Phi[k, k + 6] = 0.5 * dt * dt
    P_new = Phi @ P @ Phi.T + Q * dt
    P_new = 0.5 * (P_new + P_new.T)
    if not _bounded(x_new):
        return x_new, P_new, DIVERGED
    return x_new, P_new, OK


@jit
def chain_steps(x, P, a, w, R, dt, Q):
    for k in range(a.shape[0]):
        x_n, P_n, status = chain_step(x, P, a[k], w[k], R[k], dt, Q)
        if status != OK:
            return x_n, P_n, status, k
        x = x_n
        P = P_n
    return x, P, OK, a.shape[0]


@jit
def _rk4_transition(t0, t1, u0, u1, r0, r1, s, n_sub):
    # Phi(t1, t0) for dPhi/dt = A(t) Phi with u and ranges linear on [t0, t1]
    n = 13 + s.shape[0]
    Phi = np.eye(n)
    h = (t1 - t0) / n_sub
    span = t1 - t0
    for m in range(n_sub):
        ta = m * h
        tb = ta + 0.5 * h
        tc = ta + h
        fa = ta / span
        fb = tb / span
        fc = tc / span
        Aa = _transformed_A(u0 + fa * (u1 - u0), r0 + fa * (r1 - r0), s)
        Ab = _transformed_A(u0 + fb * (u1 - u0), r0 + fb * (r1 - r0), s)
        Ac = _transformed_A(u0 + fc * (u1 - u0), r0 + fc * (r1 - r0), s)
        k1 = Aa @ Phi
        k2 = Ab @ (Phi + 0.5 * h * k1)
        k3 = Ab @ (Phi + 0.5 * h * k2)
        k4 = Ac @ (Phi + h * k3)
        Phi = Phi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return Phi


@jit
def interval_transitions(ts, us, rs, s, tol, max_doublings):
    """Transition matrices across consecutive sample intervals.

    Each interval starts with one RK4 substep and doubles the substep count
    until two successive refinements agree to ``tol`` (max-abs, relative
    to the matrix scale). Returns ``(Phis, substeps, ok)``.
    """
    n = 13 + s.shape[0]
    K = ts.shape[0] - 1
    Phis = np.empty((K, n, n))
    subs = np.empty(K, dtype=np.int64)
    ok = True
    for k in range(K):
        n_sub = 1
        coarse = _rk4_transition(ts[k], ts[k + 1], us[k], us[k + 1], rs[k], rs[k + 1], s, n_sub)
        converged = False
        for _ in range(max_doublings):
            n_sub *= 2
            fine = _rk4_transition(ts[k], ts[k + 1], us[k], us[k + 1], rs[k], rs[k + 1], s, n_sub)
            err = np.max(np.abs(fine - coarse))
            scale = max(1.0, np.max(np.abs(fine)))
            coarse = fine
            if err <= tol * scale:
                converged = True
                break
        if not converged:
            ok = False
        Phis[k] = coarse
        subs[k] = n_sub
    return Phis, subs, ok
