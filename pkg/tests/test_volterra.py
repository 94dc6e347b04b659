import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from feshbach_dyn import bath, volterra
from feshbach_dyn.bath import BathSpec, Lorentzian
from feshbach_dyn.qops import SIGMA_Z, matrix_exp
from feshbach_dyn.volterra import VolterraError, VolterraProblem, convergence_order, solve, solve_timedep


def damped(c, lam):
    """Closed form of z'' + lam z' + c z = 0, z(0) = 1, z'(0) = 0 (underdamped or undamped)."""
    w = math.sqrt(c - lam**2 / 4)

    def z(t):
        return np.exp(-lam * t / 2) * (np.cos(w * t) + lam / (2 * w) * np.sin(w * t))

    return z


def exp_problem(c, lam, dt, t_max):
    n = int(round(t_max / dt))
    return VolterraProblem(c * np.exp(-lam * np.arange(n + 1) * dt), dt, t_max)


def test_free_case_is_identity():
    sol = solve(VolterraProblem(np.zeros((11, 2, 2)), 0.1, 1.0))
    assert np.array_equal(sol.z, np.broadcast_to(np.eye(2), sol.z.shape))


def test_undamped_oscillator():
    # grid step within 0.1 % of 1e-3 that lands on pi
    sol = solve(exp_problem(1.0, 0.0, math.pi / 3142, math.pi))
    assert abs(sol.z[-1, 0, 0] - (-1)) < 1e-6


def test_underdamped_oscillator_on_window():
    sol = solve(exp_problem(1.0, 1.0, 1e-3, 10.0))
    assert np.max(np.abs(sol.z[:, 0, 0] - damped(1.0, 1.0)(sol.times))) < 1e-6


def test_timedep_homogeneous_reduction():
    dt, t_max = 1e-2, 3.0
    prob = exp_problem(1.0, 0.5, dt, t_max)
    ref = solve(prob)
    samples = np.asarray(prob.kernel)
    sol = solve_timedep(lambda k: samples[k::-1], 1, dt, t_max)
    assert np.max(np.abs(sol.z - ref.z)) < 1e-12


def test_timedep_pure_drive():
    dt, t_max, w = 5e-4, 1.0, 1.0
    sol = solve_timedep(lambda k: np.zeros((k + 1, 2, 2)), 2, dt, t_max, drive=lambda t: w * SIGMA_Z / 2)
    exact = np.array([matrix_exp(w * SIGMA_Z / 2, t) for t in sol.times])
    assert np.max(np.abs(sol.z - exact)) < 1e-8


def test_matrix_solve_decouples():
    dt, t_max = 1e-2, 4.0
    n = int(round(t_max / dt))
    tau = np.arange(n + 1) * dt
    m1 = 0.7 * np.exp(-(0.4 + 0.3j) * tau)
    m2 = 0.2 * np.exp(-(1.0 - 0.5j) * tau)
    k = np.zeros((n + 1, 2, 2), dtype=complex)
    k[:, 0, 0], k[:, 1, 1] = m1, m2
    z = solve(VolterraProblem(k, dt, t_max)).z
    z1 = solve(VolterraProblem(m1, dt, t_max)).z[:, 0, 0]
    z2 = solve(VolterraProblem(m2, dt, t_max)).z[:, 0, 0]
    assert np.max(np.abs(z[:, 0, 0] - z1)) < 1e-12
    assert np.max(np.abs(z[:, 1, 1] - z2)) < 1e-12
    assert not np.any(z[:, 0, 1]) and not np.any(z[:, 1, 0])


def test_linearity_in_initial_condition(rng):
    dt, t_max = 1e-2, 2.0
    n = int(round(t_max / dt))
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    k = np.exp(-np.arange(n + 1) * dt)[:, None, None] * (a @ a.conj().T)
    b = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    h = np.diag([0.3, -0.2])
    plain = solve(VolterraProblem(k, dt, t_max, h_eff=h)).z
    started = solve(VolterraProblem(k, dt, t_max, h_eff=h, z0=b)).z
    assert np.max(np.abs(plain @ b - started)) < 1e-12


def test_contraction_for_lorentzian_kernel():
    class P:
        omega0 = 1.0
        bath = BathSpec(Lorentzian(1.3, 0.5, 2.0), beta=2.0)

    sol = solve(VolterraProblem(bath.kernel_m(P, 1), 1e-3, 10.0))
    assert np.max(np.abs(sol.z[:, 0, 0])) <= 1 + 10 * 1e-6


def test_grid_validation():
    with pytest.raises(VolterraError):
        VolterraProblem(np.zeros(5), 0.3, 1.0).n_steps
    with pytest.raises(VolterraError):
        VolterraProblem(np.zeros(5), 1e-9, 100.0).n_steps
    with pytest.raises(VolterraError):
        solve(VolterraProblem(np.zeros(5), 0.1, 1.0))


def test_nonfinite_aborts_with_step():
    k = np.full(11, np.nan)
    with pytest.raises(VolterraError, match="step 1"):
        solve(VolterraProblem(k, 0.1, 1.0))


def test_order_against_closed_form():
    rep = convergence_order(lambda dt: exp_problem(1.0, 1.0, dt, 10.0), [4e-3, 2e-3, 1e-3],
                            exact=damped(1.0, 1.0))
    assert rep.flag == "ok" and abs(rep.order - 2) < 0.3


def test_order_zero_kernel_flagged_exact():
    rep = convergence_order(lambda dt: VolterraProblem(np.zeros(int(round(1 / dt)) + 1), dt, 1.0),
                            [0.1, 0.05, 0.025, 0.0125])
    assert rep.flag == "exact"


def test_order_self_convergence_lorentzian():
    class P:
        omega0 = 1.0
        bath = BathSpec(Lorentzian(1.2, 0.6, 1.5))

    kern = bath.kernel_m(P, 1)
    rep = convergence_order(lambda dt: VolterraProblem(kern, dt, 8.0), [8e-3, 4e-3, 2e-3, 1e-3])
    assert rep.flag == "ok" and abs(rep.order - 2) < 0.3


def test_determinism():
    a = solve(exp_problem(1.0, 0.3, 1e-2, 5.0)).z
    b = solve(exp_problem(1.0, 0.3, 1e-2, 5.0)).z
    assert np.array_equal(a, b)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(0.05, 2.0), st.floats(-2, 2))
def test_exponential_kernels_stay_contractive(c, lam, detune):
    dt, t_max = 5e-3, 10.0
    n = int(round(t_max / dt))
    tau = np.arange(n + 1) * dt
    z = solve(VolterraProblem(c * np.exp(-(lam + 1j * detune) * tau), dt, t_max)).z[:, 0, 0]
    assert np.max(np.abs(z)) <= 1 + 10 * dt**2
