"""Qubit coupled to a bosonic bath beyond the rotating-wave approximation.

Basis: index 0 is the excited level |1>, index 1 the ground level |2>, and
``H_S = omega0 sigma+ sigma-``. In the Born-like approximation the
interaction-picture amplitude operator is ``Z = diag(z1, z2)`` with each
``z_k`` obeying a scalar Volterra equation, and the dynamical map reads::

    L(rho) = Z rho Z^dag + d1 s- rho s+ + d2 s+ rho s- + alpha s+ rho s+ + alpha* s- rho s-

``d_k`` is paired with ``z_k`` so that trace preservation is
``d_k + |z_k|^2 = 1``: ``d1`` moves excited population down, ``d2`` moves
ground population up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import qops
from .bath import BathSpec, kernel_D_A, kernel_m
from .volterra import VolterraProblem, grid_steps, solve


class SpinBosonError(ValueError):
    pass


@dataclass(frozen=True)
class SpinBosonParams:
    omega0: float
    bath: BathSpec
    t_max: float
    dt: float
    secular: bool = False

    def __post_init__(self):
        if not math.isfinite(self.omega0):
            raise SpinBosonError("omega0 must be a finite real number")
        grid_steps(self.t_max, self.dt)

    @property
    def n_steps(self):
        return grid_steps(self.t_max, self.dt)

    @property
    def times(self):
        return np.arange(self.n_steps + 1) * self.dt


# ---------------------------------------------------------------------------
# amplitudes and Kraus coefficients
# ---------------------------------------------------------------------------


def solve_z(params: SpinBosonParams):
    """Return ``(times, z1, z2)`` from the two decoupled scalar equations."""
    out = []
    for which in (1, 2):
        kern = kernel_m(params, which)
        sol = solve(VolterraProblem(kern, params.dt, params.t_max))
        out.append(sol.z[:, 0, 0].copy())
    return params.times, out[0], out[1]


def double_trapezoid_series(p, q, k_pos, k_neg, dt):
    """Running 2-D trapezoid ``S_n = int_0^t_n int_0^t_n p(s) q*(u) K(u - s) ds du``.

    ``k_pos[k] = K(k dt)`` and ``k_neg[k] = K(-k dt)``. Each step adds the
    new boundary strip, so the whole series costs ``O(N^2)``.
    """
    p = np.asarray(p, dtype=complex)
    qc = np.conj(np.asarray(q, dtype=complex))
    n_pts = p.size
    c = np.full(n_pts, dt, dtype=float)
    c[0] = 0.5 * dt
    cp = c * p
    cq = c * qc
    out = np.zeros(n_pts, dtype=complex)
    # total = sum_{i,j<=n} c_i c_j F(i, j) with c = dt * (1/2, 1, 1, ...)
    total = c[0] * c[0] * p[0] * qc[0] * k_pos[0]
    for n in range(1, n_pts):
        f_nn = p[n] * qc[n] * k_pos[0]
        # row: sum_j c_j F(n, j), F(n, j) = p_n q*_j K((j - n) dt)
        row = p[n] * np.dot(cq[: n + 1], k_neg[n::-1])
        # column: sum_i c_i F(i, n) = q*_n sum_i c_i p_i K((n - i) dt)
        col = qc[n] * np.dot(cp[: n + 1], k_pos[n::-1])
        total = total + dt * (row + col) - dt * dt * f_nn
        out[n] = total - 0.5 * dt * (row + col) + 0.25 * dt * dt * f_nn
    return out


def compute_d_alpha(params: SpinBosonParams, z1, z2, imag_tol=1e-10):
    """Kraus coefficients ``(d1, d2, alpha)`` on the grid by double quadrature."""
    n = params.n_steps
    z1 = np.asarray(z1, dtype=complex)
    z2 = np.asarray(z2, dtype=complex)
    if z1.shape != (n + 1,) or z2.shape != (n + 1,):
        raise SpinBosonError(f"z arrays must have {n + 1} grid points")
    dt = params.dt
    w0 = params.omega0
    lags = np.arange(n + 1) * dt
    kd1, kd2, ka = kernel_D_A(params)

    k1p = np.exp(1j * w0 * lags) * kd1(lags)
    k1m = np.exp(-1j * w0 * lags) * kd1(-lags)
    d1 = double_trapezoid_series(z1, z1, k1p, k1m, dt)
    k2p = np.exp(-1j * w0 * lags) * kd2(lags)
    k2m = np.exp(1j * w0 * lags) * kd2(-lags)
    d2 = double_trapezoid_series(z2, z2, k2p, k2m, dt)

    for name, d in (("d1", d1), ("d2", d2)):
        bad = np.max(np.abs(d.imag), initial=0.0)
        if bad > imag_tol:
            raise SpinBosonError(f"{name} has imaginary part {bad:.3e}")

    if params.secular or params.bath.cross_channel is None:
        alpha = np.zeros(n + 1, dtype=complex)
    else:
        phase = np.exp(1j * w0 * params.times)
        alpha = double_trapezoid_series(phase * z2, phase.conj() * z1, ka(lags), ka(-lags), dt)
    return d1.real.copy(), d2.real.copy(), alpha


# ---------------------------------------------------------------------------
# maps
# ---------------------------------------------------------------------------


def kraus_superops(z1, z2, d1, d2, alpha):
    """Stack of 4x4 superoperators (row-major vec) of the qubit map."""
    z1, z2, d1, d2, alpha = np.broadcast_arrays(
        *(np.asarray(x, dtype=complex) for x in (z1, z2, d1, d2, alpha))
    )
    s = np.zeros(z1.shape + (4, 4), dtype=complex)
    s[..., 0, 0] = np.abs(z1) ** 2
    s[..., 0, 3] = d2
    s[..., 3, 3] = np.abs(z2) ** 2
    s[..., 3, 0] = d1
    s[..., 1, 1] = z1 * np.conj(z2)
    s[..., 2, 2] = np.conj(z1) * z2
    s[..., 1, 2] = alpha
    s[..., 2, 1] = np.conj(alpha)
    return s


@dataclass
class MapSnapshot:
    t: float
    z1: complex
    z2: complex
    d1: float
    d2: float
    alpha: complex
    choi: np.ndarray = field(repr=False)
    trace_defect: float
    min_choi_eig: float

    @property
    def superop(self):
        return qops.superop_from_choi(self.choi)

    def apply(self, rho):
        return qops.apply_superop(self.superop, np.asarray(rho, dtype=complex))


def assemble_map(t, z1, z2, d1, d2, alpha) -> MapSnapshot:
    s = kraus_superops(z1, z2, d1, d2, alpha)
    choi = qops.choi_from_superop(s)
    return MapSnapshot(
        float(t), complex(z1), complex(z2), float(np.real(d1)), float(np.real(d2)), complex(alpha),
        choi, float(qops.trace_defect(choi)), float(qops.choi_min_eig(choi)),
    )


@dataclass
class QubitMapSeries:
    """Kraus-coefficient timeseries of a qubit map (interaction picture)."""

    times: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    alpha: np.ndarray
    omega0: float = 0.0

    def superops(self):
        return kraus_superops(self.z1, self.z2, self.d1, self.d2, self.alpha)

    def chois(self):
        return qops.choi_from_superop(self.superops())

    def trace_defects(self):
        return qops.trace_defect(self.chois())

    def choi_min_eigs(self):
        return qops.choi_min_eig(self.chois())

    def snapshot(self, k) -> MapSnapshot:
        return assemble_map(self.times[k], self.z1[k], self.z2[k], self.d1[k], self.d2[k], self.alpha[k])

    def evolve(self, rho, lab_frame=True):
        """Evolved states ``(N, 2, 2)``; ``lab_frame`` undoes the interaction picture."""
        rho = np.asarray(rho, dtype=complex)
        s = self.superops()
        if lab_frame:
            s = schroedinger_picture(s, self.times, self.omega0)
        return (s @ rho.reshape(-1)).reshape(-1, 2, 2)


def schroedinger_picture(superops, times, omega0):
    """Compose interaction-picture maps with the free evolution ``exp(-i H_S t)``."""
    times = np.asarray(times, dtype=float)
    phase = np.exp(-1j * omega0 * times)
    # U = diag(phase, 1); conjugation multiplies rho_12 by phase and rho_21 by phase*
    rot = np.ones(times.shape + (4,), dtype=complex)
    rot[..., 1] = phase
    rot[..., 2] = np.conj(phase)
    return rot[..., :, None] * np.asarray(superops)


def simulate(params: SpinBosonParams) -> QubitMapSeries:
    """Full Born-like pipeline: amplitudes, Kraus coefficients, map series."""
    times, z1, z2 = solve_z(params)
    d1, d2, alpha = compute_d_alpha(params, z1, z2)
    return QubitMapSeries(times, z1, z2, d1, d2, alpha, params.omega0)


# ---------------------------------------------------------------------------
# white-noise closed form
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WhiteNoiseParams:
    gamma1: float
    gamma2: float
    eta: complex
    omega0: float

    def __post_init__(self):
        if self.gamma1 < 0 or self.gamma2 < 0:
            raise SpinBosonError("white-noise rates must be non-negative")
        if abs(self.eta) ** 2 > self.gamma1 * self.gamma2 * (1 + 1e-12):
            raise SpinBosonError(
                f"|eta|^2 = {abs(self.eta) ** 2:.6g} exceeds gamma1*gamma2 = "
                f"{self.gamma1 * self.gamma2:.6g}; the map would not be completely positive"
            )


def whitenoise_eta(params: WhiteNoiseParams, t, secular=False):
    """Coherence-transfer coefficient ``eta(t)``; identically zero when secular."""
    t = np.asarray(t, dtype=float)
    if secular or params.eta == 0:
        return np.zeros(t.shape, dtype=complex)
    rate = params.gamma1 + params.gamma2 + 4j * params.omega0
    if rate == 0:
        return params.eta * t.astype(complex)
    return 2 * params.eta / rate * (-np.expm1(-0.5 * rate * t))


def whitenoise_coefficients(params: WhiteNoiseParams, t, secular=False):
    """White-noise map in the same ``(z1, z2, d1, d2, alpha)`` form."""
    t = np.asarray(t, dtype=float)
    z1 = np.exp(-0.5 * params.gamma1 * t).astype(complex)
    z2 = np.exp(-0.5 * params.gamma2 * t).astype(complex)
    d1 = -np.expm1(-params.gamma1 * t)
    d2 = -np.expm1(-params.gamma2 * t)
    return z1, z2, d1, d2, whitenoise_eta(params, t, secular)


def whitenoise_map(params: WhiteNoiseParams, t, secular=False):
    """4x4 superoperator (or stack) of the white-noise map at time(s) ``t``."""
    return kraus_superops(*whitenoise_coefficients(params, t, secular))


def whitenoise_apply(params: WhiteNoiseParams, t, rho, secular=False):
    """Evolve ``rho`` with the closed-form white-noise map (element formulas)."""
    rho = np.asarray(rho, dtype=complex)
    g1, g2 = params.gamma1, params.gamma2
    e1, e2 = math.exp(-g1 * t), math.exp(-g2 * t)
    decay = math.exp(-0.5 * (g1 + g2) * t)
    eta_t = complex(whitenoise_eta(params, t, secular))
    out = np.empty((2, 2), dtype=complex)
    out[0, 0] = e1 * rho[0, 0] + (1 - e2) * rho[1, 1]
    out[1, 1] = e2 * rho[1, 1] + (1 - e1) * rho[0, 0]
    out[0, 1] = decay * rho[0, 1] + eta_t * rho[1, 0]
    out[1, 0] = decay * rho[1, 0] + eta_t.conjugate() * rho[0, 1]
    return out


def whitenoise_series(params: WhiteNoiseParams, times, secular=False) -> QubitMapSeries:
    times = np.asarray(times, dtype=float)
    z1, z2, d1, d2, alpha = whitenoise_coefficients(params, times, secular)
    return QubitMapSeries(times, z1, z2, d1, d2, alpha, params.omega0)


def population_block(params: WhiteNoiseParams, t):
    """2x2 matrix taking ``(rho11, rho22)`` at 0 to its value at ``t``."""
    e1, e2 = math.exp(-params.gamma1 * t), math.exp(-params.gamma2 * t)
    return np.array([[e1, 1 - e2], [1 - e1, e2]])


def semigroup_defect(params: WhiteNoiseParams, t, s):
    """Frobenius norm of ``P(t+s) - P(t) P(s)`` for the population block."""
    p = population_block
    return float(np.linalg.norm(p(params, t + s) - p(params, t) @ p(params, s)))
