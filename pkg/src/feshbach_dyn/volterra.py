"""Second-order solver for the non-local operator equation

    dZ/dt = -i H(t) Z(t) - int_0^t M(t, s) Z(s) ds,    Z(0) = Z0 (default I).

The lag integral uses the trapezoidal rule on the uniform grid and the time
step is the trapezoidal (Crank-Nicolson) rule. Because the equation is linear
the implicit corrector is solved exactly with a ``dim x dim`` linear solve, so
the scheme is self-starting and the total cost is ``O(N^2)`` in the number of
steps ``N``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

MAX_STEPS = 10**7


class VolterraError(RuntimeError):
    pass


@dataclass
class VolterraProblem:
    """Time-homogeneous problem; ``kernel`` is an array of samples ``M(k dt)``.

    ``kernel`` has shape ``(N+1,)`` for scalar problems or ``(N+1, d, d)``.
    A :class:`~feshbach_dyn.bath.CorrelationKernel` (or any object with a
    ``sample(dt, n)`` method) is also accepted.
    """

    kernel: object
    dt: float
    t_max: float
    h_eff: Optional[np.ndarray] = None
    z0: Optional[np.ndarray] = None

    @property
    def n_steps(self):
        return grid_steps(self.t_max, self.dt)


@dataclass
class VolterraSolution:
    times: np.ndarray
    z: np.ndarray
    derivative: np.ndarray

    @property
    def scalar(self):
        return self.z.shape[1:] == (1, 1)

    def entry(self, i=0, j=0):
        return self.z[:, i, j]


def grid_steps(t_max, dt):
    if not (dt > 0) or not (t_max >= 0):
        raise VolterraError("need dt > 0 and t_max >= 0")
    ratio = t_max / dt
    n = int(round(ratio))
    if abs(ratio - n) > 1e-9 * max(1.0, ratio):
        raise VolterraError(f"t_max/dt = {ratio!r} is not an integer")
    if n > MAX_STEPS:
        raise VolterraError(f"step count {n} exceeds {MAX_STEPS}")
    return n


def _as_matrix_samples(samples, n):
    samples = np.asarray(samples, dtype=complex)
    if samples.ndim == 1:
        samples = samples[:, None, None]
    if samples.ndim != 3 or samples.shape[1] != samples.shape[2]:
        raise VolterraError(f"kernel samples have bad shape {samples.shape}")
    if samples.shape[0] < n + 1:
        raise VolterraError(f"kernel has {samples.shape[0]} samples, need {n + 1}")
    return samples[: n + 1]


def _march(dim, n, dt, drive, kernel_row, z0, constant_lhs=None):
    """Core stepping loop shared by both entry points.

    ``drive(k)`` returns ``H(t_k)``; ``kernel_row(k)`` returns the samples
    ``M(t_k, t_j)`` for ``j = 0..k`` as an array ``(k+1, dim, dim)``.
    """
    eye = np.eye(dim, dtype=complex)
    z = np.empty((n + 1, dim, dim), dtype=complex)
    dz = np.empty_like(z)
    z[0] = eye if z0 is None else np.asarray(z0, dtype=complex).reshape(dim, dim)
    dz[0] = -1j * drive(0) @ z[0]
    half = 0.5 * dt
    lhs_inv = constant_lhs
    for k in range(n):
        row = kernel_row(k + 1)
        # memory integral at t_{k+1} without the (unknown) endpoint term
        known = half * row[0] @ z[0]
        if k >= 1:
            if dim == 1:
                known = known + dt * np.dot(row[1 : k + 1, 0, 0], z[1 : k + 1, 0, 0])
            else:
                known = known + dt * np.einsum("jab,jbc->ac", row[1 : k + 1], z[1 : k + 1])
        h_next = drive(k + 1)
        m_zero = row[k + 1]
        rhs = z[k] + half * dz[k] - half * known
        if lhs_inv is None:
            lhs = eye + half * (1j * h_next + half * m_zero)
            z[k + 1] = np.linalg.solve(lhs, rhs)
        else:
            z[k + 1] = lhs_inv @ rhs
        dz[k + 1] = -1j * h_next @ z[k + 1] - known - half * m_zero @ z[k + 1]
        if not np.all(np.isfinite(z[k + 1])):
            raise VolterraError(f"non-finite solution at step {k + 1} (t = {(k + 1) * dt:.6g})")
    return z, dz


def solve(problem: VolterraProblem) -> VolterraSolution:
    """Solve a time-homogeneous problem ``M(t, s) = M(t - s)`` with constant ``H``."""
    n = problem.n_steps
    dt = problem.dt
    kernel = problem.kernel
    if hasattr(kernel, "sample"):
        kernel = kernel.sample(dt, n)
    samples = _as_matrix_samples(kernel, n)
    dim = samples.shape[1]
    h = np.zeros((dim, dim), dtype=complex) if problem.h_eff is None else np.asarray(problem.h_eff, dtype=complex).reshape(dim, dim)
    lhs = np.eye(dim) + 0.5 * dt * (1j * h + 0.5 * dt * samples[0])
    lhs_inv = np.linalg.inv(lhs)
    # reversed view so row k is M((k - j) dt) for j = 0..k
    reversed_samples = samples[::-1]

    def kernel_row(k):
        return reversed_samples[n - k :]

    z, dz = _march(dim, n, dt, lambda k: h, kernel_row, problem.z0, constant_lhs=lhs_inv)
    return VolterraSolution(np.arange(n + 1) * dt, z, dz)


def solve_timedep(
    kernel_row: Callable[[int], np.ndarray],
    dim: int,
    dt: float,
    t_max: float,
    drive: Optional[Callable[[float], np.ndarray]] = None,
    z0=None,
) -> VolterraSolution:
    """Solve with a two-time kernel and a time-dependent drive.

    ``kernel_row(k)`` must return ``M(t_k, t_j)`` for ``j = 0..k`` with shape
    ``(k+1,)`` (scalar) or ``(k+1, dim, dim)``; ``drive(t)`` returns the
    Hermitian ``V_eff(t)``.
    """
    n = grid_steps(t_max, dt)
    zero = np.zeros((dim, dim), dtype=complex)

    def drive_k(k):
        if drive is None:
            return zero
        return np.asarray(drive(k * dt), dtype=complex).reshape(dim, dim)

    def row(k):
        r = np.asarray(kernel_row(k), dtype=complex)
        return r.reshape(k + 1, dim, dim)

    z, dz = _march(dim, n, dt, drive_k, row, z0)
    return VolterraSolution(np.arange(n + 1) * dt, z, dz)


@dataclass
class ConvergenceReport:
    order: float
    errors: list
    dts: list
    flag: str  # "ok", "exact" or "non-monotone"


def convergence_order(make_problem, dts, exact=None, tol_exact=1e-13):
    """Estimate the global order of accuracy from runs at successively halved steps.

    ``make_problem(dt)`` builds the problem for a given step. With ``exact``
    (callable ``t -> Z(t)``) errors are measured against it, otherwise
    from successive differences of the runs; errors are max-norms on the
    coarsest grid.
    The order is the least-squares slope of ``log(err)`` against ``log(dt)``.
    """
    dts = [float(x) for x in dts]
    if len(dts) < 3:
        raise ValueError("need at least three step sizes")
    for a, b in zip(dts, dts[1:]):
        if not math.isclose(a / b, 2.0, rel_tol=1e-9):
            raise ValueError("step sizes must halve successively")
    sols = [solve(make_problem(dt)) for dt in dts]
    coarse_t = sols[0].times

    def on_coarse(sol, dt):
        stride = int(round(dts[0] / dt))
        return sol.z[::stride]

    if exact is not None:
        ref = np.array([np.asarray(exact(t), dtype=complex).reshape(sols[0].z.shape[1:]) for t in coarse_t])
        errors = [float(np.max(np.abs(on_coarse(s, dt) - ref))) for s, dt in zip(sols, dts)]
        used = dts
    else:
        # successive differences: |Z_h - Z_h/2| / |Z_h/2 - Z_h/4| = 2^p exactly for an order-p scheme
        coarse = [on_coarse(s, dt) for s, dt in zip(sols, dts)]
        errors = [float(np.max(np.abs(a - b))) for a, b in zip(coarse, coarse[1:])]
        used = dts[:-1]
    if max(errors) <= tol_exact:
        return ConvergenceReport(float("nan"), errors, used, "exact")
    e = np.array(errors)
    if len(e) < 2 or not (np.all(np.diff(e) < 0) and np.all(e > 0)):
        return ConvergenceReport(float("nan"), errors, used, "non-monotone")
    slope = np.polyfit(np.log(used), np.log(e), 1)[0]
    return ConvergenceReport(float(slope), errors, used, "ok")
