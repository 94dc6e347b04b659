"""Spectral densities and two-point bath correlation functions.

Form factors enter only through spectral densities ``J(omega) >= 0`` on the
frequency axis. With ``a(f) = int f*(k) a(k) dk`` and ``a^dag(f) = int f(k)
a^dag(k) dk`` the thermal two-point functions of a channel are::

    C+(tau) = <a(f_t) a^dag(f_s)> = int J(w) (1 + n(w)) exp(-i w tau) dw
    C-(tau) = <a^dag(f_t) a(f_s)> = int J(w) n(w) exp(+i w tau) dw

with ``tau = t - s`` and ``n`` the Bose occupation. A cross channel carries a
complex profile ``J_x(w) = f*(w) h(w)`` and the same weights.

Time convention: ``U_t = exp(-iHt)`` and ``V(t) = exp(iH0 t) V exp(-iH0 t)``.
The memory kernels of the qubit amplitudes are then::

    m1(tau) = exp(+i w0 tau) [C+_f(tau) + C-_h(tau)]
    m2(tau) = exp(-i w0 tau) [C+_h(tau) + C-_f(tau)]

so a rotating channel centred at ``w0`` gives a slowly varying ``m1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.integrate import simpson

INF = math.inf


class BathError(ValueError):
    pass


def n_thermal(omega, beta):
    """Bose-Einstein occupation ``1 / (exp(beta*omega) - 1)``; zero at ``beta = inf``."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise BathError("thermal occupation requires omega > 0")
    if math.isinf(beta):
        out = np.zeros_like(omega)
    else:
        with np.errstate(over="ignore"):
            out = 1.0 / np.expm1(beta * omega)
    return out if out.ndim else float(out)


def _asarray_tau(tau):
    return np.asarray(tau, dtype=float)


# ---------------------------------------------------------------------------
# spectral channels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Lorentzian:
    """Lorentzian line ``J(w) = s l^2 / (2 pi ((w - c)^2 + l^2))``.

    ``strength`` s is the time integral of the vacuum correlation function, so
    ``C+ -> s * delta(tau)`` when the width goes to infinity. At finite
    temperature the occupation is evaluated at the line centre, which keeps
    the closed form and is accurate for ``width << center``.
    """

    center: float
    width: float
    strength: complex

    def __post_init__(self):
        if self.width <= 0:
            raise BathError("lorentzian width must be positive")

    def density(self, omega):
        w = np.asarray(omega, dtype=float)
        return self.strength * self.width**2 / (2 * np.pi * ((w - self.center) ** 2 + self.width**2))

    def total_weight(self):
        return self.strength * self.width / 2

    def _occupation(self, beta):
        if math.isinf(beta):
            return 0.0
        if self.center <= 0:
            raise BathError("thermal lorentzian needs a positive center frequency")
        return n_thermal(self.center, beta)

    def plus(self, tau, beta=INF):
        tau = _asarray_tau(tau)
        n = self._occupation(beta)
        return (1 + n) * self.total_weight() * np.exp(-self.width * np.abs(tau) - 1j * self.center * tau)

    def minus(self, tau, beta=INF):
        tau = _asarray_tau(tau)
        n = self._occupation(beta)
        return n * self.total_weight() * np.exp(-self.width * np.abs(tau) + 1j * self.center * tau)

    def grid_hint(self):
        return (self.center - 60 * self.width, self.center + 60 * self.width)


def _tail_sum(b, beta, k0):
    """``sum_{k >= k0} (b + k beta)^-2`` by Euler-Maclaurin (Re b > 0)."""
    x = b + k0 * beta
    return 1 / (beta * x) + 1 / (2 * x**2) + beta / (6 * x**3) - beta**3 / (30 * x**5)


@dataclass(frozen=True)
class OhmicExpCut:
    """Ohmic density ``J(w) = coupling * w * exp(-w / cutoff)`` on ``w > 0``."""

    coupling: complex
    cutoff: float
    n_terms: int = 64

    def __post_init__(self):
        if self.cutoff <= 0:
            raise BathError("ohmic cutoff must be positive")

    def density(self, omega):
        w = np.asarray(omega, dtype=float)
        return np.where(w > 0, self.coupling * w * np.exp(-np.clip(w, 0, None) / self.cutoff), 0.0)

    def total_weight(self):
        return self.coupling * self.cutoff**2

    def _series(self, b, beta, first):
        # int w exp(-a w) sum_k exp(-k beta w) exp(-/+ i w tau) dw, term by term
        out = np.zeros_like(b)
        for k in range(first, self.n_terms):
            out = out + 1 / (b + k * beta) ** 2
        return out + _tail_sum(b, beta, self.n_terms)

    def plus(self, tau, beta=INF):
        b = 1 / self.cutoff + 1j * _asarray_tau(tau)
        if math.isinf(beta):
            return self.coupling / b**2
        return self.coupling * self._series(b, beta, 0)

    def minus(self, tau, beta=INF):
        tau = _asarray_tau(tau)
        if math.isinf(beta):
            return np.zeros(tau.shape, dtype=complex)
        b = 1 / self.cutoff - 1j * tau
        return self.coupling * self._series(b, beta, 1)

    def grid_hint(self):
        return (0.0, 60 * self.cutoff)


@dataclass(frozen=True)
class FlatSingleMode:
    """A single bath mode at ``center`` with spectral weight ``weight``."""

    center: float
    weight: complex

    def total_weight(self):
        return self.weight

    def _occupation(self, beta):
        return 0.0 if math.isinf(beta) else n_thermal(self.center, beta)

    def plus(self, tau, beta=INF):
        tau = _asarray_tau(tau)
        return (1 + self._occupation(beta)) * self.weight * np.exp(-1j * self.center * tau)

    def minus(self, tau, beta=INF):
        tau = _asarray_tau(tau)
        return self._occupation(beta) * self.weight * np.exp(1j * self.center * tau)


@dataclass(frozen=True)
class Tabulated:
    """Spectral density sampled on a frequency grid; integrals use composite Simpson."""

    omega: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        j = np.asarray(self.values)
        if w.ndim != 1 or w.shape != j.shape or w.size < 3:
            raise BathError("tabulated channel needs matching 1-D grids with >= 3 points")
        if np.any(np.diff(w) <= 0):
            raise BathError("tabulated frequency grid must be strictly increasing")
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "values", j)

    @classmethod
    def from_text(cls, text):
        rows = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split("\t") if "\t" in line else line.split()
            if len(parts) != 2:
                raise BathError(f"line {lineno}: expected 'omega<TAB>J', got {line!r}")
            try:
                rows.append((float(parts[0]), float(parts[1])))
            except ValueError as exc:
                raise BathError(f"line {lineno}: {exc}") from None
        if not rows:
            raise BathError("no data rows in tabulated spectral density")
        w, j = np.array(rows).T
        return cls(w, j)

    @classmethod
    def from_file(cls, path):
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def density(self, omega):
        return np.interp(np.asarray(omega, dtype=float), self.omega, self.values, left=0.0, right=0.0)

    def total_weight(self):
        return simpson(self.values, x=self.omega)

    def _weights(self, beta, sign):
        if math.isinf(beta):
            n = np.zeros_like(self.omega)
        else:
            support = self.values != 0
            if np.any(self.omega[support] <= 0):
                raise BathError("thermal tabulated channel must vanish for omega <= 0")
            n = np.zeros_like(self.omega)
            n[support] = n_thermal(self.omega[support], beta)
        weighted = self.values * n
        if self.omega[0] == 0 and self.values[0] == 0:
            # J n has a finite limit at the origin for a linear onset; extrapolate it
            w1, w2 = self.omega[1], self.omega[2]
            weighted = weighted.copy()
            weighted[0] = weighted[1] - w1 * (weighted[2] - weighted[1]) / (w2 - w1)
        return self.values + weighted if sign > 0 else weighted

    def _integrate(self, weights, tau, phase_sign, stride=1):
        tau = _asarray_tau(tau)
        w = self.omega[::stride]
        wt = weights[::stride]
        flat = tau.reshape(-1)
        out = np.empty(flat.shape, dtype=complex)
        for start in range(0, flat.size, 512):
            chunk = flat[start:start + 512]
            integrand = wt[None, :] * np.exp(phase_sign * 1j * np.outer(chunk, w))
            out[start:start + 512] = simpson(integrand, x=w, axis=1)
        return out.reshape(tau.shape)

    def plus_with_error(self, tau, beta=INF):
        wt = self._weights(beta, +1)
        full = self._integrate(wt, tau, -1)
        half = self._integrate(wt, tau, -1, stride=2)
        return full, np.abs(full - half)

    def minus_with_error(self, tau, beta=INF):
        wt = self._weights(beta, -1)
        full = self._integrate(wt, tau, +1)
        half = self._integrate(wt, tau, +1, stride=2)
        return full, np.abs(full - half)

    def plus(self, tau, beta=INF):
        return self._integrate(self._weights(beta, +1), tau, -1)

    def minus(self, tau, beta=INF):
        return self._integrate(self._weights(beta, -1), tau, +1)

    def grid_hint(self):
        return (float(self.omega[0]), float(self.omega[-1]))


@dataclass(frozen=True)
class ChannelSum:
    """Superposition of independent channels (e.g. several discrete modes)."""

    parts: tuple

    def total_weight(self):
        return sum(p.total_weight() for p in self.parts)

    def plus(self, tau, beta=INF):
        return sum(p.plus(tau, beta) for p in self.parts)

    def minus(self, tau, beta=INF):
        return sum(p.minus(tau, beta) for p in self.parts)


def discrete_modes(freqs, weights):
    return ChannelSum(tuple(FlatSingleMode(float(w), complex(g)) for w, g in zip(freqs, weights)))


def corr_plus(channel, beta, tau):
    if channel is None:
        return np.zeros(np.shape(tau), dtype=complex)
    return np.asarray(channel.plus(tau, beta), dtype=complex)


def corr_minus(channel, beta, tau):
    if channel is None:
        return np.zeros(np.shape(tau), dtype=complex)
    return np.asarray(channel.minus(tau, beta), dtype=complex)


# ---------------------------------------------------------------------------
# bath specification and Cauchy-Schwarz validation
# ---------------------------------------------------------------------------


def _flatten(channel):
    if channel is None:
        return []
    if isinstance(channel, ChannelSum):
        out = []
        for p in channel.parts:
            out.extend(_flatten(p))
        return out
    return [channel]


def _split(channel):
    discrete: dict[float, complex] = {}
    continuous = []
    for p in _flatten(channel):
        if isinstance(p, FlatSingleMode):
            discrete[p.center] = discrete.get(p.center, 0) + p.weight
        else:
            continuous.append(p)
    return discrete, continuous


def _continuous_density(parts, omega):
    out = np.zeros(omega.shape, dtype=complex)
    for p in parts:
        out = out + p.density(omega)
    return out


def check_cauchy_schwarz(f, h, cross, rtol=1e-9):
    """Raise ``BathError`` unless ``|J_x|^2 <= J_f J_h`` holds pointwise."""
    if cross is None:
        return
    fd, fc = _split(f)
    hd, hc = _split(h)
    xd, xc = _split(cross)
    for w, wx in xd.items():
        bound = abs(fd.get(w, 0)) * abs(hd.get(w, 0))
        if abs(wx) ** 2 > bound * (1 + rtol) + 1e-300:
            raise BathError(f"cross weight at omega={w} violates |x|^2 <= f*h")
    if not xc:
        return
    lo = min(p.grid_hint()[0] for p in xc + fc + hc)
    hi = max(p.grid_hint()[1] for p in xc + fc + hc)
    grid = np.linspace(lo, hi, 40001)
    jx = np.abs(_continuous_density(xc, grid)) ** 2
    jf = np.real(_continuous_density(fc, grid))
    jh = np.real(_continuous_density(hc, grid))
    excess = jx - jf * jh * (1 + rtol)
    if np.max(excess) > 1e-12 * max(np.max(jx), 1e-300):
        i = int(np.argmax(excess))
        raise BathError(f"cross spectral density violates Cauchy-Schwarz near omega={grid[i]:.6g}")


@dataclass(frozen=True)
class BathSpec:
    """Rotating (``f``), counter-rotating (``h``) and cross channels at inverse temperature ``beta``."""

    f_channel: object
    h_channel: object = None
    cross_channel: object = None
    beta: float = INF

    def __post_init__(self):
        if not (self.beta > 0):
            raise BathError("beta must be positive (use math.inf for vacuum)")
        check_cauchy_schwarz(self.f_channel, self.h_channel, self.cross_channel)


# ---------------------------------------------------------------------------
# correlation kernels
# ---------------------------------------------------------------------------


@dataclass
class CorrelationKernel:
    """Time-homogeneous kernel ``K(tau)``, evaluated lazily and cached per grid."""

    tag: str
    evaluator: Callable[[np.ndarray], np.ndarray]
    _cache: dict = field(default_factory=dict, repr=False)

    def __call__(self, tau):
        return np.asarray(self.evaluator(_asarray_tau(tau)), dtype=complex)

    def sample(self, dt, n):
        """Samples at ``tau = 0, dt, ..., n dt`` (read-only array)."""
        key = (float(dt), int(n))
        if key not in self._cache:
            values = self(np.arange(n + 1) * dt)
            values.setflags(write=False)
            self._cache[key] = values
        return self._cache[key]


def kernel_m(params, which):
    """Memory kernel ``m_1`` or ``m_2`` for the qubit amplitudes.

    ``params`` needs ``omega0`` and ``bath`` attributes.
    """
    bath = params.bath
    w0 = params.omega0
    if which == 1:
        def ev(tau):
            return np.exp(1j * w0 * tau) * (
                corr_plus(bath.f_channel, bath.beta, tau) + corr_minus(bath.h_channel, bath.beta, tau)
            )
    elif which == 2:
        def ev(tau):
            return np.exp(-1j * w0 * tau) * (
                corr_plus(bath.h_channel, bath.beta, tau) + corr_minus(bath.f_channel, bath.beta, tau)
            )
    else:
        raise ValueError("which must be 1 or 2")
    return CorrelationKernel(f"m{which}", ev)


def kernel_D_A(params):
    """Kernels ``D1 = C+_f + C-_h``, ``D2 = C-_f + C+_h`` and cross ``A``.

    ``A(tau) = X+(tau) + X-(tau)`` with the cross profile weighted by
    ``1 + n`` and ``n``. In terms of these the Kraus coefficients are
    (``tau = u - s``)::

        d1 = int int exp(+i w0 (u - s)) D1(u - s) z1(s) z1*(u)
        d2 = int int exp(-i w0 (u - s)) D2(u - s) z2(s) z2*(u)
        alpha = int int exp(+i w0 (s + u)) A(u - s) z2(s) z1*(u)
    """
    bath = params.bath
    beta = bath.beta

    def d1(tau):
        return corr_plus(bath.f_channel, beta, tau) + corr_minus(bath.h_channel, beta, tau)

    def d2(tau):
        return corr_minus(bath.f_channel, beta, tau) + corr_plus(bath.h_channel, beta, tau)

    def a(tau):
        return corr_plus(bath.cross_channel, beta, tau) + corr_minus(bath.cross_channel, beta, tau)

    return CorrelationKernel("D1", d1), CorrelationKernel("D2", d2), CorrelationKernel("A", a)
