import numpy as np
import pytest
from scipy.integrate import solve_ivp

from lblnav import kernels
from lblnav.ltv import build_A
from lblnav.obsv import (
    SignalRecord,
    gramian,
    iterated_input_integrals,
    noncoplanar_check,
    phi_aa_closed_form,
    signals_from_log,
    signals_from_truth,
    transition_matrix,
    window_gramians,
)


@pytest.fixture(scope="module")
def signals(helix, landmarks):
    truth = helix.sample(np.arange(0, 3001) / 100.0)
    return signals_from_truth(truth, landmarks)


def test_default_landmarks_noncoplanar(landmarks):
    assert noncoplanar_check(landmarks)


@pytest.mark.parametrize(
    "s",
    [
        [[0, 0, 0], [10, 0, 0], [0, 10, 0], [10, 10, 0]],
        [[0, 0, 5], [1, 2, 5], [3, -1, 5], [7, 7, 5], [-2, 4, 5]],
        [[0, 0, 0], [1, 1, 1], [2, 2, 2], [3, 3, 3]],
        [[0, 0, 0], [1, 0, 0], [0, 1, 0]],
        [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1e-12]],
    ],
)
def test_degenerate_sets_are_coplanar(s):
    assert not noncoplanar_check(np.array(s, dtype=float))


def test_identity_at_zero_length(signals, landmarks):
    np.testing.assert_array_equal(transition_matrix(3.0, 3.0, signals, landmarks), np.eye(17))


@pytest.mark.parametrize("delta", [0.1, 1.0, 5.0])
def test_integrator_block_matches_closed_form(signals, landmarks, delta):
    Phi = transition_matrix(2.0, 2.0 + delta, signals, landmarks)
    assert np.abs(Phi[:9, :9] - phi_aa_closed_form(delta)).max() < 1e-8


def test_transition_matches_reference_ode(signals, landmarks):
    def rhs(t, y):
        u, r = signals.at(t)
        return (build_A(u, r, landmarks) @ y.reshape(17, 17)).ravel()

    ref = solve_ivp(rhs, (1.0, 3.0), np.eye(17).ravel(), method="DOP853", rtol=1e-12, atol=1e-12,
                    max_step=0.01).y[:, -1].reshape(17, 17)
    Phi = transition_matrix(1.0, 3.0, signals, landmarks)
    np.testing.assert_allclose(Phi, ref, atol=1e-8 * np.abs(ref).max())


def test_semigroup(signals, landmarks):
    P01 = transition_matrix(0.0, 4.0, signals, landmarks)
    P12 = transition_matrix(4.0, 9.5, signals, landmarks)
    P02 = transition_matrix(0.0, 9.5, signals, landmarks)
    np.testing.assert_allclose(P12 @ P01, P02, atol=1e-7 * max(1.0, np.abs(P02).max()))


def test_input_blocks_track_iterated_integrals(signals, landmarks):
    # ds8/dt = u.x1 + s9 and s9 is decoupled from x1, so the s8 row on x1 is
    # exactly the integral of the (piecewise linear) input: trapezoidal sums
    t0, tf = 0.0, 2.0
    Phi = transition_matrix(t0, tf, signals, landmarks)
    grid = signals.grid(t0, tf)
    u = np.array([signals.at(t)[0] for t in grid])
    u1, _ = iterated_input_integrals(grid, u)
    np.testing.assert_allclose(Phi[13, 0:3], u1[-1], rtol=0, atol=1e-10)


def test_step_halving_is_converged(signals, landmarks):
    ts = np.linspace(0.0, 1.0, 11)
    us = np.array([signals.at(t)[0] for t in ts])
    rs = np.array([signals.at(t)[1] for t in ts])
    _, subs, ok = kernels.interval_transitions(ts, us, rs, landmarks, 1e-12, 12)
    assert ok
    for k in range(10):
        a = kernels._rk4_transition(ts[k], ts[k + 1], us[k], us[k + 1], rs[k], rs[k + 1], landmarks, int(subs[k]))
        b = kernels._rk4_transition(ts[k], ts[k + 1], us[k], us[k + 1], rs[k], rs[k + 1], landmarks, 2 * int(subs[k]))
        assert np.abs(a - b).max() < 1e-8


def test_gramian_positive_definite_on_default_scenario(signals, landmarks):
    rep = gramian(0.0, 10.0, signals, landmarks)
    assert rep.min_eigenvalue > 0
    assert rep.condition_number == pytest.approx(rep.max_eigenvalue / rep.min_eigenvalue)
    np.testing.assert_array_equal(rep.W, rep.W.T)
    assert rep.min_eigenvalue <= np.linalg.eigvalsh(rep.W).min() + 1e-12 * rep.max_eigenvalue


def test_zero_length_gramian(signals, landmarks):
    rep = gramian(5.0, 5.0, signals, landmarks)
    assert not rep.W.any()
    assert rep.min_eigenvalue == 0.0


def test_gramian_is_psd_on_short_interval(signals, landmarks):
    rep = gramian(0.0, 0.05, signals, landmarks)
    assert rep.min_eigenvalue > -1e-9 * rep.max_eigenvalue


def test_gramian_monotone_in_interval(signals, landmarks):
    mins = [gramian(0.0, tf, signals, landmarks).min_eigenvalue for tf in (2.5, 5.0, 10.0, 20.0)]
    assert all(b >= a for a, b in zip(mins, mins[1:]))


def test_gramian_additivity(signals, landmarks):
    W02 = gramian(0.0, 12.0, signals, landmarks).W
    W01 = gramian(0.0, 5.0, signals, landmarks).W
    W12 = gramian(5.0, 12.0, signals, landmarks).W
    Phi = transition_matrix(0.0, 5.0, signals, landmarks)
    assembled = W01 + Phi.T @ W12 @ Phi
    assert np.abs(assembled - W02).max() <= 1e-6 * np.abs(W02).max()


def test_windows_match_direct_gramians(signals, landmarks):
    wins = window_gramians(signals, landmarks, 10.0, 0.0, 30.0)
    assert [w.interval for w in wins] == [(0.0, 10.0), (10.0, 20.0), (20.0, 30.0)]
    for w in wins:
        direct = gramian(*w.interval, signals, landmarks)
        assert np.abs(direct.W - w.W).max() <= 1e-9 * np.abs(direct.W).max()


def test_signal_record_validation():
    with pytest.raises(ValueError):
        SignalRecord(t=np.array([0.0, 0.0]), u=np.zeros((2, 3)), ranges=np.ones((2, 4)))
    rec = SignalRecord(t=np.array([0.0, 1.0]), u=np.array([[0, 0, 0], [2, 4, 6.0]]), ranges=np.ones((2, 4)))
    np.testing.assert_allclose(rec.at(0.25)[0], [0.5, 1.0, 1.5])
    with pytest.raises(ValueError):
        rec.at(1.5)


def test_signals_from_noise_free_log_match_truth(quiet_log, landmarks):
    sig = signals_from_log(quiet_log)
    ref = signals_from_truth(quiet_log.truth, landmarks)
    np.testing.assert_allclose(sig.u, ref.u, atol=1e-12)
    on_epochs = slice(0, None, quiet_log.decimation)
    np.testing.assert_allclose(sig.ranges[on_epochs], ref.ranges[on_epochs], atol=1e-9)
