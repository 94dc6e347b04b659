import math

import numpy as np
import pytest
from scipy.integrate import quad

from feshbach_dyn import bath
from feshbach_dyn.bath import BathSpec, FlatSingleMode, Lorentzian, OhmicExpCut, Tabulated


class P:
    def __init__(self, omega0, b):
        self.omega0 = omega0
        self.bath = b


def test_n_thermal_examples():
    assert bath.n_thermal(1.3, math.inf) == 0
    assert bath.n_thermal(math.log(2), 1.0) == pytest.approx(1, rel=1e-14)


def test_n_thermal_small_argument_matches_laurent_series():
    x = 1e-4
    series = 1 / x - 0.5 + x / 12 - x**3 / 720
    assert abs(bath.n_thermal(x, 1.0) - series) < 1e-8


def test_n_thermal_rejects_nonpositive_frequency():
    with pytest.raises(bath.BathError):
        bath.n_thermal(0.0, 1.0)


def test_flat_single_mode():
    tau = np.linspace(-3, 3, 7)
    m = FlatSingleMode(1.7, 1.0)
    assert np.allclose(bath.corr_plus(m, math.inf, tau), np.exp(-1.7j * tau))
    n = bath.n_thermal(1.7, 0.8)
    assert np.allclose(bath.corr_minus(m, 0.8, tau), n * np.exp(1.7j * tau))


def _lorentzian_quad(ch, tau):
    lam, c, s = ch.width, ch.center, ch.strength

    def j(x):
        return s * lam**2 / (2 * np.pi * (x**2 + lam**2))

    if tau == 0:
        val = quad(j, -np.inf, np.inf, epsabs=1e-13)[0]
    else:
        val = 2 * quad(j, 0, np.inf, weight="cos", wvar=abs(tau))[0]
    return np.exp(-1j * c * tau) * val


def test_lorentzian_closed_form_against_quadrature():
    ch = Lorentzian(1.2, 0.4, 0.9)
    for tau in (0.0, 0.3, -0.8, 2.5):
        assert abs(ch.plus(tau) - _lorentzian_quad(ch, tau)) < 1e-8
    assert ch.plus(0.0) == pytest.approx(ch.total_weight())


def _ohmic_quad(ch, beta, tau, sign):
    def weight(w):
        n = 0.0 if math.isinf(beta) else 1 / math.expm1(beta * w)
        return ch.coupling * w * math.exp(-w / ch.cutoff) * ((1 + n) if sign > 0 else n)

    phase = -sign * tau
    re = quad(lambda w: weight(w) * math.cos(phase * w), 0, 80 * ch.cutoff, limit=400, epsabs=1e-13)[0]
    im = quad(lambda w: weight(w) * math.sin(phase * w), 0, 80 * ch.cutoff, limit=400, epsabs=1e-13)[0]
    return re + 1j * im


@pytest.mark.parametrize("beta", [math.inf, 2.0, 0.3])
def test_ohmic_series_against_quadrature(beta):
    ch = OhmicExpCut(0.3, 2.0)
    for tau in (0.0, 0.4, -1.1, 3.0):
        assert abs(ch.plus(tau, beta) - _ohmic_quad(ch, beta, tau, +1)) < 1e-8
        assert abs(ch.minus(tau, beta) - _ohmic_quad(ch, beta, tau, -1)) < 1e-8


def test_tabulated_matches_ohmic_closed_form():
    ch = OhmicExpCut(0.5, 1.0)
    w = np.linspace(0, 50, 20001)
    tab = Tabulated(w, ch.density(w))
    tau = np.array([0.0, 0.5, 2.0])
    for beta in (math.inf, 1.5):
        val, err = tab.plus_with_error(tau, beta)
        assert np.max(np.abs(val - ch.plus(tau, beta))) < 1e-7
        assert np.all(err < 1e-6)


def test_tabulated_from_text():
    tab = Tabulated.from_text("# omega\tJ\n0\t0\n1\t0.5\n2\t0.0\n")
    assert tab.total_weight() == pytest.approx(2 / 3)
    with pytest.raises(bath.BathError):
        Tabulated.from_text("0 1 2\n")
    with pytest.raises(bath.BathError):
        Tabulated.from_text("1\t1\n0\t1\n2\t1\n")


def test_hermitian_symmetry_of_plus():
    tau = np.linspace(0.1, 4, 9)
    for ch in (Lorentzian(1.0, 0.5, 1.0), OhmicExpCut(0.2, 3.0)):
        for beta in (math.inf, 1.0):
            assert np.allclose(ch.plus(-tau, beta), np.conj(ch.plus(tau, beta)), atol=1e-14)
            assert np.allclose(ch.minus(-tau, beta), np.conj(ch.minus(tau, beta)), atol=1e-14)


def test_minus_vanishes_in_vacuum():
    tau = np.linspace(-2, 2, 5)
    for ch in (Lorentzian(1.0, 0.5, 1.0), OhmicExpCut(0.2, 3.0), FlatSingleMode(1.0, 1.0)):
        assert not np.any(bath.corr_minus(ch, math.inf, tau))


def test_minus_at_zero_is_weighted_occupation():
    ch = OhmicExpCut(0.4, 1.5)
    beta = 1.2
    expected = quad(lambda w: ch.coupling * w * math.exp(-w / 1.5) / math.expm1(beta * w), 0, 200, limit=400)[0]
    val = ch.minus(0.0, beta)
    assert abs(val.imag) < 1e-14
    assert val.real == pytest.approx(expected, rel=1e-9)


def test_kernel_m_examples():
    b = BathSpec(Lorentzian(1.0, 0.3, 2.0))
    p = P(1.0, b)
    tau = np.linspace(0, 5, 11)
    assert np.allclose(bath.kernel_m(p, 1)(tau), 2.0 * 0.3 / 2 * np.exp(-0.3 * tau), atol=1e-15)
    assert not np.any(bath.kernel_m(p, 2)(tau))


def test_kernel_values_at_zero_are_real_nonnegative():
    f = OhmicExpCut(0.3, 2.0)
    h = Lorentzian(1.5, 0.5, 0.4)
    p = P(1.0, BathSpec(f, h, beta=2.0))
    for k in (bath.kernel_m(p, 1), bath.kernel_m(p, 2), *bath.kernel_D_A(p)[:2]):
        v = k(0.0)
        assert abs(v.imag) < 1e-14 and v.real >= 0
    n_f = quad(lambda w: 0.3 * w * math.exp(-w / 2) / math.expm1(2 * w), 0, 200, limit=400)[0]
    m2_0 = h.total_weight() * (1 + bath.n_thermal(1.5, 2.0)) + n_f
    assert bath.kernel_m(p, 2)(0.0).real == pytest.approx(m2_0, rel=1e-9)


def test_zero_cross_channel_gives_zero_A():
    p = P(1.0, BathSpec(Lorentzian(1, 1, 1), Lorentzian(1, 1, 1)))
    assert not np.any(bath.kernel_D_A(p)[2](np.linspace(0, 1, 5)))


def test_cauchy_schwarz_violation_rejected():
    f = Lorentzian(1.0, 1.0, 1.0)
    h = Lorentzian(1.0, 1.0, 0.5)
    BathSpec(f, h, Lorentzian(1.0, 1.0, math.sqrt(0.5)))
    with pytest.raises(bath.BathError):
        BathSpec(f, h, Lorentzian(1.0, 1.0, 0.8))
    with pytest.raises(bath.BathError):
        BathSpec(bath.discrete_modes([1.0], [1.0]), bath.discrete_modes([1.0], [0.25]),
                 bath.discrete_modes([1.0], [0.6]))


def test_kernel_sample_is_cached_and_readonly():
    p = P(1.0, BathSpec(Lorentzian(1, 1, 1)))
    k = bath.kernel_m(p, 1)
    a = k.sample(0.1, 10)
    assert k.sample(0.1, 10) is a
    with pytest.raises(ValueError):
        a[0] = 0
