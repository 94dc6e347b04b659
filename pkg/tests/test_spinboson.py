import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from feshbach_dyn import qops, spinboson as sb
from feshbach_dyn.bath import BathSpec, Lorentzian, OhmicExpCut
from feshbach_dyn.spinboson import SpinBosonError, SpinBosonParams, WhiteNoiseParams


def counter_rotating(beta=math.inf):
    return BathSpec(Lorentzian(1, 1, 1), Lorentzian(1, 1, 0.5), Lorentzian(1, 1, math.sqrt(0.5 * 1)), beta=beta)


def test_double_trapezoid_matches_brute_force(rng):
    n, dt = 40, 0.05
    p = rng.normal(size=n + 1) + 1j * rng.normal(size=n + 1)
    q = rng.normal(size=n + 1) + 1j * rng.normal(size=n + 1)
    lags = np.arange(n + 1) * dt
    kfun = lambda tau: np.exp(-(0.3 + 0.8j) * tau) * (1 + 0.2 * tau)  # noqa: E731
    out = sb.double_trapezoid_series(p, q, kfun(lags), kfun(-lags), dt)
    for m in (1, 7, n):
        s = np.arange(m + 1) * dt
        f = p[None, : m + 1] * np.conj(q[: m + 1, None]) * kfun(s[:, None] - s[None, :])
        brute = np.trapezoid(np.trapezoid(f, dx=dt, axis=1), dx=dt)
        assert abs(out[m] - brute) < 1e-13


def test_vacuum_without_counter_rotating_keeps_ground_amplitude():
    p = SpinBosonParams(1.0, BathSpec(Lorentzian(1.0, 0.5, 1.0)), 5.0, 1e-2)
    _, z1, z2 = sb.solve_z(p)
    assert np.array_equal(z2, np.ones_like(z2))
    assert abs(z1[-1]) < 1


def test_resonant_lorentzian_is_damped_oscillator():
    c, lam = 1.0, 1.0
    p = SpinBosonParams(1.0, BathSpec(Lorentzian(1.0, lam, 2 * c / lam)), 10.0, 1e-3)
    t, z1, _ = sb.solve_z(p)
    w = math.sqrt(c - lam**2 / 4)
    exact = np.exp(-lam * t / 2) * (np.cos(w * t) + lam / (2 * w) * np.sin(w * t))
    assert np.max(np.abs(z1 - exact)) < 1e-6


def test_zero_strength_bath_is_trivial():
    p = SpinBosonParams(1.0, BathSpec(Lorentzian(1, 1, 0.0), Lorentzian(1, 1, 0.0)), 2.0, 1e-2)
    s = sb.simulate(p)
    assert np.all(s.z1 == 1) and np.all(s.z2 == 1)
    assert not np.any(s.d1) and not np.any(s.d2) and not np.any(s.alpha)


@pytest.mark.parametrize("beta", [math.inf, 5.0])
def test_trace_identity_and_cp_short_run(beta):
    dt = 2e-3
    p = SpinBosonParams(1.0, counter_rotating(beta), 4.0, dt)
    s = sb.simulate(p)
    tol = 10 * dt**2
    assert s.d1[0] == 0 and s.d2[0] == 0 and s.alpha[0] == 0
    assert np.max(np.abs(s.d1 + np.abs(s.z1) ** 2 - 1)) <= tol
    assert np.max(np.abs(s.d2 + np.abs(s.z2) ** 2 - 1)) <= tol
    assert np.max(s.trace_defects()) <= tol
    assert np.min(s.choi_min_eigs()) >= -tol
    assert np.all(np.abs(s.alpha) ** 2 <= s.d1 * s.d2 + tol)
    assert np.max(np.abs(s.alpha)) > 1e-2


def test_secular_or_missing_cross_gives_zero_alpha():
    p = SpinBosonParams(1.0, counter_rotating(), 2.0, 1e-2, secular=True)
    assert not np.any(sb.simulate(p).alpha)
    p = SpinBosonParams(1.0, BathSpec(Lorentzian(1, 1, 1), Lorentzian(1, 1, 0.5)), 2.0, 1e-2)
    assert not np.any(sb.simulate(p).alpha)


def test_ohmic_thermal_scenario_trace_identity():
    dt = 2e-3
    p = SpinBosonParams(1.0, BathSpec(OhmicExpCut(0.05, 3.0), OhmicExpCut(0.02, 3.0), beta=2.0), 4.0, dt)
    s = sb.simulate(p)
    assert np.max(np.abs(s.d1 + np.abs(s.z1) ** 2 - 1)) <= 10 * dt**2
    assert np.max(np.abs(s.d2 + np.abs(s.z2) ** 2 - 1)) <= 10 * dt**2


def test_map_at_zero_is_identity():
    snap = sb.assemble_map(0.0, 1, 1, 0, 0, 0)
    assert np.allclose(snap.superop, np.eye(4))
    c = qops.choi_from_superop(snap.superop)
    assert np.linalg.matrix_rank(c) == 1 and qops.trace_defect(c) == 0


def test_superop_entries_follow_vec_layout():
    s = sb.kraus_superops(0.6, 0.8j, 0.64, 0.36, 0.1 + 0.2j)
    assert s[0, 0] == pytest.approx(0.36) and s[3, 3] == pytest.approx(0.64)
    assert s[3, 0] == pytest.approx(0.64) and s[0, 3] == pytest.approx(0.36)
    assert s[1, 1] == pytest.approx(0.6 * np.conj(0.8j)) and s[2, 2] == pytest.approx(0.6 * 0.8j)
    assert s[1, 2] == pytest.approx(0.1 + 0.2j) and s[2, 1] == pytest.approx(0.1 - 0.2j)


def test_hermiticity_preserved(rng):
    s = sb.simulate(SpinBosonParams(1.0, counter_rotating(), 2.0, 1e-2))
    for k in (5, 100, 200):
        h = qops.random_hermitian(2, rng)
        out = s.snapshot(k).apply(h)
        assert np.max(np.abs(out - out.conj().T)) < 1e-12


def test_random_states_keep_unit_trace(rng):
    dt = 1e-2
    s = sb.simulate(SpinBosonParams(1.0, counter_rotating(5.0), 3.0, dt))
    for _ in range(5):
        states = s.evolve(qops.random_density(2, rng))
        assert np.max(np.abs(np.trace(states, axis1=1, axis2=2) - 1)) <= 10 * dt**2


def test_schroedinger_picture():
    t = np.array([0.0, 0.7, 2.0])
    lab = sb.schroedinger_picture(np.broadcast_to(np.eye(4), (3, 4, 4)), t, 1.3)
    assert np.allclose(lab[0], np.eye(4))
    rho = np.array([[0.6, 0.2 + 0.1j], [0.2 - 0.1j, 0.4]])
    out = (lab @ rho.reshape(-1)).reshape(-1, 2, 2)
    assert np.allclose(out[:, 0, 1], rho[0, 1] * np.exp(-1.3j * t))
    assert np.allclose(out[:, 0, 0], 0.6) and np.allclose(out[:, 1, 1], 0.4)


def test_free_lab_frame_matches_unitary():
    p = SpinBosonParams(1.3, BathSpec(Lorentzian(1, 1, 0.0)), 2.0, 1e-2)
    s = sb.simulate(p)
    rho = np.array([[0.3, 0.4j], [-0.4j, 0.7]])
    states = s.evolve(rho)
    u = qops.matrix_exp(p.omega0 * qops.SIGMA_PLUS @ qops.SIGMA_MINUS, 2.0)
    assert np.allclose(states[-1], u @ rho @ u.conj().T, atol=1e-14)


# -- white noise --------------------------------------------------------------


def test_whitenoise_identity_at_zero():
    p = WhiteNoiseParams(1.0, 0.5, 0.3 + 0.2j, 1.0)
    assert np.allclose(sb.whitenoise_map(p, 0.0), np.eye(4))


def test_whitenoise_elements_match_superop(rng):
    p = WhiteNoiseParams(1.0, 0.5, 0.3 - 0.4j, 1.7)
    rho = qops.random_density(2, rng)
    for t in (0.1, 1.0, 4.0):
        assert np.allclose(sb.whitenoise_apply(p, t, rho), qops.apply_superop(sb.whitenoise_map(p, t), rho), atol=1e-15)


def test_whitenoise_eta_closed_form():
    p = WhiteNoiseParams(1.0, 0.5, 0.3, 1.0)
    t = 1.7
    rate = 1.5 + 4j
    assert sb.whitenoise_eta(p, t) == pytest.approx(2 * 0.3 / rate * (1 - np.exp(-0.5 * rate * t)))
    assert sb.whitenoise_eta(p, t, secular=True) == 0


def test_whitenoise_swap():
    p = WhiteNoiseParams(1.0, 0.5, 0.0, 1.0)
    rho = np.array([[0.8, 0.1], [0.1, 0.2]])
    out = sb.whitenoise_apply(p, 50 / 0.5, rho)
    assert abs(out[0, 0] - 0.2) < 1e-6 and abs(out[1, 1] - 0.8) < 1e-6


def test_whitenoise_one_rate_is_semigroup():
    p = WhiteNoiseParams(1.0, 0.0, 0.0, 1.0)
    assert sb.semigroup_defect(p, 0.7, 1.3) < 1e-12
    rho = np.diag([0.6, 0.4])
    r22 = [sb.whitenoise_apply(p, t, rho)[1, 1].real for t in np.linspace(0, 5, 30)]
    assert np.all(np.diff(r22) > 0)
    assert np.allclose(r22[-1], 0.4 + (1 - math.exp(-5)) * 0.6)


def test_whitenoise_cp_bound():
    with pytest.raises(SpinBosonError, match="completely positive"):
        WhiteNoiseParams(1.0, 0.5, 0.8, 1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 3), st.floats(0, 3), st.floats(0, 1), st.floats(0, 2 * math.pi), st.floats(0, 20))
def test_whitenoise_is_cptp(g1, g2, frac, phase, t):
    eta = frac * math.sqrt(g1 * g2) * complex(math.cos(phase), math.sin(phase))
    s = sb.whitenoise_map(WhiteNoiseParams(g1, g2, eta, 1.0), t)
    c = qops.choi_from_superop(s)
    assert qops.trace_defect(c) < 1e-14
    assert qops.choi_min_eig(c) > -1e-12


def test_convergence_to_white_noise():
    g1, g2, dt, t_max = 1.0, 0.5, 1e-3, 4.0
    rho = np.diag([0.7, 0.3]).astype(complex)
    errors = []
    for k in (10, 20, 40):
        lam = k * min(g1, g2)
        b = BathSpec(Lorentzian(1.0, lam, g1), Lorentzian(1.0, lam, g2))
        s = sb.simulate(SpinBosonParams(1.0, b, t_max, dt))
        pops = s.evolve(rho)[:, 0, 0].real
        ref = np.array([sb.whitenoise_apply(WhiteNoiseParams(g1, g2, 0, 1.0), t, rho)[0, 0].real for t in s.times])
        errors.append(np.max(np.abs(pops - ref)))
    assert errors[0] > errors[1] > errors[2]
