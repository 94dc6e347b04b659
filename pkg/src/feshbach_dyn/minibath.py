"""Exact finite-dimensional reference: a qubit coupled to a few truncated modes.

The total Hamiltonian is ``H = omega0 s+ s- + sum_j w_j b_j^dag b_j + s+ B + s- B^dag``
with ``B = sum_j (f_j^* b_j + h_j b_j^dag)``, i.e. ``a(f) = sum_j f_j^* b_j``.

Amplitudes are matrices on ``H_S (x) H_E``; the Hamiltonian acts on them by left
multiplication and the projector is ``P0 (mu_S (x) mu_E) = mu_S (x) kE (kE, mu_E)``
extended by linearity. Left multiplication and ``P0`` both commute with right
multiplication by ``A (x) I``, so all Feshbach quantities are computed on the
reduced space ``X = H_S (x) H_E (x) C^r`` where ``r`` is the rank of ``kE``
(``kE`` is diagonal in the Fock basis, ``r = 1`` for the vacuum).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import null_space

from . import qops
from .bath import BathSpec, discrete_modes

MAX_DIM = 256
TRUNCATION_WARN = 1e-3


class MiniBathError(ValueError):
    pass


@dataclass(frozen=True)
class MiniBathSpec:
    n_modes: int
    n_max: int
    mode_freqs: tuple
    f_coeffs: tuple
    h_coeffs: tuple
    omega0: float
    env_state: str = "vacuum"
    beta: float = math.inf

    def __post_init__(self):
        if not 1 <= self.n_modes <= 3:
            raise MiniBathError("n_modes must be between 1 and 3")
        if not 1 <= self.n_max <= 4:
            raise MiniBathError("n_max must be between 1 and 4")
        for name in ("mode_freqs", "f_coeffs", "h_coeffs"):
            value = tuple(getattr(self, name))
            if len(value) != self.n_modes:
                raise MiniBathError(f"{name} needs {self.n_modes} entries, got {len(value)}")
            object.__setattr__(self, name, value)
        if self.dim > MAX_DIM:
            raise MiniBathError(f"total dimension {self.dim} exceeds {MAX_DIM}")
        if self.env_state not in ("vacuum", "gibbs"):
            raise MiniBathError("env_state must be 'vacuum' or 'gibbs'")
        if self.env_state == "gibbs" and not (0 < self.beta < math.inf):
            raise MiniBathError("gibbs environment needs a finite positive beta")

    @property
    def dim_env(self):
        return (self.n_max + 1) ** self.n_modes

    @property
    def dim(self):
        return 2 * self.dim_env

    def matched_bath(self, beta=None) -> BathSpec:
        """Continuum-free bath description with the same two-point functions (vacuum exact)."""
        f = [complex(c) for c in self.f_coeffs]
        h = [complex(c) for c in self.h_coeffs]
        w = [float(x) for x in self.mode_freqs]
        if beta is None:
            beta = math.inf if self.env_state == "vacuum" else self.beta
        return BathSpec(
            discrete_modes(w, [abs(c) ** 2 for c in f]),
            discrete_modes(w, [abs(c) ** 2 for c in h]),
            discrete_modes(w, [fc.conjugate() * hc for fc, hc in zip(f, h)]),
            beta=beta,
        )


def annihilators(n_modes, n_max):
    """Truncated annihilation operators, mode 0 being the slowest index."""
    d = n_max + 1
    a1 = np.diag(np.sqrt(np.arange(1, d)), 1).astype(complex)
    ops = []
    for j in range(n_modes):
        factors = [np.eye(d)] * n_modes
        factors[j] = a1
        op = factors[0]
        for fct in factors[1:]:
            op = np.kron(op, fct)
        ops.append(op)
    return ops


@dataclass
class FeshbachBlocks:
    """Projectors and Hamiltonian blocks on the reduced amplitude space ``X``."""

    p0: np.ndarray
    left_h: np.ndarray

    @property
    def p1(self):
        return np.eye(self.p0.shape[0]) - self.p0

    def block(self, i, j):
        p = (self.p0, self.p1)
        return p[i] @ self.left_h @ p[j]


@dataclass
class MiniBath:
    spec: MiniBathSpec
    h_s: np.ndarray
    h_e: np.ndarray
    v: np.ndarray
    omega: np.ndarray
    kappa_e: np.ndarray
    cols: np.ndarray = field(repr=False)

    @property
    def dim_s(self):
        return 2

    @property
    def dim_e(self):
        return self.h_e.shape[0]

    @cached_property
    def h0(self):
        return qops.kron(self.h_s, np.eye(self.dim_e)) + qops.kron(np.eye(2), self.h_e)

    @cached_property
    def h(self):
        return self.h0 + self.v

    @cached_property
    def _eig(self):
        return np.linalg.eigh(self.h)

    def propagator(self, t):
        w, vec = self._eig
        return (vec * np.exp(-1j * w * t)) @ vec.conj().T

    # -- amplitude-space projector on full D x D amplitudes -------------------

    def project0(self, mu):
        """``P0`` acting on an amplitude (matrix on ``H_S (x) H_E``)."""
        d_s, d_e = self.dim_s, self.dim_e
        blocks = np.asarray(mu).reshape(d_s, d_e, d_s, d_e)
        coef = np.einsum("ab,iajb->ij", self.kappa_e.conj(), blocks)
        return qops.kron(coef, self.kappa_e)

    def project1(self, mu):
        return np.asarray(mu) - self.project0(mu)

    def extract_system(self, mu):
        """Coefficient matrix ``c`` with ``P0 mu = c (x) kE``."""
        d_s, d_e = self.dim_s, self.dim_e
        blocks = np.asarray(mu).reshape(d_s, d_e, d_s, d_e)
        return np.einsum("ab,iajb->ij", self.kappa_e.conj(), blocks)

    # -- reduced space X -----------------------------------------------------

    @property
    def rank(self):
        return self.cols.size

    @cached_property
    def k_vectors(self):
        """Columns ``|s> (x) vec(kE)`` in ``X``, shape ``(n_X, d_S)``."""
        ke = self.kappa_e[:, self.cols].reshape(-1)
        return qops.kron(np.eye(2), ke[:, None])

    def left(self, op):
        """Left multiplication by ``op`` on ``X``."""
        return qops.kron(op, np.eye(self.rank))

    @cached_property
    def blocks(self) -> FeshbachBlocks:
        k = self.k_vectors
        return FeshbachBlocks(k @ k.conj().T, self.left(self.h))

    @cached_property
    def range_p1(self):
        """Orthonormal basis of the part of ``range(P1)`` reachable from ``P0``.

        Left multiplication by ``H`` acts column by column, so the span of
        ``Pi_l K_s`` over the spectral projectors ``Pi_l`` of ``H`` is invariant
        under ``H`` and ``P0`` and has dimension at most ``2 D``. Everything
        built from ``H11`` (kernel, ``Y_t``) lives in it.
        """
        w, vec = self._eig
        d, r = vec.shape[0], self.rank
        k = self.k_vectors.reshape(d, r, 2)
        # v_l (x) (v_l^dag K_s) for every eigenvector and system index
        coef = np.einsum("dl,drs->lrs", vec.conj(), k)
        gen = np.einsum("dl,lrs->drls", vec, coef).reshape(d * r, -1)
        u, sv, _ = np.linalg.svd(gen, full_matrices=False)
        basis = u[:, sv > 1e-12 * sv[0]]
        return basis @ null_space((basis.conj().T @ self.k_vectors).conj().T)

    @cached_property
    def full_range_p1(self):
        """Orthonormal basis of the whole range of ``P1`` in ``X``."""
        return null_space(self.k_vectors.conj().T)

    @cached_property
    def _h11(self):
        q = self.range_p1
        lq = self._left_apply(self.h, q)
        h11 = q.conj().T @ lq
        lam, w = np.linalg.eigh(0.5 * (h11 + h11.conj().T))
        # couplings of P0 states into the irrelevant sector, in the eigenbasis of H11
        a = w.conj().T @ (q.conj().T @ self._left_apply(self.h, self.k_vectors))
        return lam, w, a

    def _left_apply(self, op, x):
        d = op.shape[0]
        xr = x.reshape(d, self.rank, -1)
        return np.einsum("ab,brk->ark", op, xr).reshape(d * self.rank, -1)

    @cached_property
    def h_eff(self):
        k = self.k_vectors
        return k.conj().T @ self._left_apply(self.h, k)

    # -- exact quantities ----------------------------------------------------

    def exact_Z(self, t, residual_tol=1e-10):
        """``Z_t`` from ``P0 U_t (I (x) kE) = Z_t (x) kE``."""
        kt = self.propagator(t) @ qops.kron(np.eye(2), self.kappa_e)
        p0 = self.project0(kt)
        z = self.extract_system(kt)
        resid = np.max(np.abs(p0 - qops.kron(z, self.kappa_e)))
        if resid > residual_tol:
            raise MiniBathError(f"P0 factorisation residual {resid:.3e}")
        return z

    @cached_property
    def _z_modes(self):
        w, vec = self._eig
        a = vec.T.reshape(-1, 2, self.dim_e)
        return w, np.einsum("lse,fe,lqf->lsq", a, self.omega, a.conj())

    def exact_Z_series(self, times):
        """``Z_t = tr_E(U_t (I (x) Omega))`` on an array of times, shape ``(N, 2, 2)``."""
        w, r = self._z_modes
        ph = np.exp(-1j * np.outer(np.asarray(times, dtype=float), w))
        return np.einsum("tl,lsq->tsq", ph, r)

    def interaction_Z_series(self, times):
        """``tr_E(exp(i H0 t) U_t (I (x) Omega))``."""
        out = []
        for t in np.asarray(times, dtype=float):
            u = qops.matrix_exp(-self.h0, t) @ self.propagator(t)
            out.append(qops.partial_trace_env(u @ qops.kron(np.eye(2), self.omega), 2, self.dim_e))
        return np.array(out)

    def exact_kernel(self, taus):
        """Memory kernel ``M(tau)`` samples, shape ``(N, 2, 2)``."""
        lam, _, a = self._h11
        ph = np.exp(-1j * np.outer(np.asarray(taus, dtype=float), lam))
        return np.einsum("ls,tl,lq->tsq", a.conj(), ph, a)

    def reduced_state(self, rho, t):
        u = self.propagator(t)
        full = u @ qops.kron(rho, self.omega) @ u.conj().T
        return qops.partial_trace_env(full, 2, self.dim_e)

    def exact_Y_and_identity(self, t, rho, dt):
        """Both sides of ``Tr_E(U (rho x Omega) U^dag) = Z rho Z^dag + Tr_E(Y (rho x Omega) Y^dag)``.

        ``Y_t`` is built by trapezoidal quadrature of its time integral on a
        grid of step close to ``dt``. Returns ``(lhs, rhs, residual)`` with the
        Frobenius residual.
        """
        rho = qops.check_density(rho)
        n = max(1, int(round(t / dt)))
        grid = np.linspace(0.0, t, n + 1)
        h = grid[1] - grid[0] if n else 0.0
        zs = self.exact_Z_series(grid)
        lam, w, a = self._h11
        weights = np.full(n + 1, h)
        weights[0] = weights[-1] = 0.5 * h
        e = np.exp(-1j * np.outer(lam, t - grid)) * weights[None, :]
        tz = (e @ zs.reshape(n + 1, 4)).reshape(-1, 2, 2)
        ycoef = np.einsum("ls,lsq->lq", a, tz)
        y_x = self.range_p1 @ (w @ ycoef)
        # X index (s, e, c) and column s' -> amplitude rows (s, e), columns (s', c)
        d_e, r = self.dim_e, self.rank
        y_amp = y_x.reshape(2 * d_e, r, 2).transpose(0, 2, 1).reshape(2 * d_e, 2 * r)
        z_t = zs[-1]
        leak = y_amp @ qops.kron(rho, np.eye(r)) @ y_amp.conj().T
        rhs = z_t @ rho @ z_t.conj().T + qops.partial_trace_env(leak, 2, d_e)
        lhs = self.reduced_state(rho, t)
        return lhs, rhs, float(np.linalg.norm(lhs - rhs))

    def exact_reduced_dynamics(self, rho, times, interaction=False):
        """Brute-force ``Tr_E(U_t (rho x Omega) U_t^dag)`` on a time grid.

        Returns ``(states, top_population)`` where ``top_population`` is the
        largest occupation of any mode's highest Fock level over the run.
        """
        rho = np.asarray(rho, dtype=complex)
        w, vec = self._eig
        m0 = vec.conj().T @ qops.kron(rho, self.omega) @ vec
        top = self._top_projector()
        states = np.empty((len(times), 2, 2), dtype=complex)
        top_pop = 0.0
        for i, t in enumerate(np.asarray(times, dtype=float)):
            ph = np.exp(-1j * w * t)
            full = (vec * ph) @ m0 @ (vec * ph).conj().T
            red = qops.partial_trace_env(full, 2, self.dim_e)
            if interaction:
                u_s = qops.matrix_exp(-self.h_s, t)
                red = u_s @ red @ u_s.conj().T
            states[i] = red
            top_pop = max(top_pop, float(np.max(np.real(np.einsum("mab,ba->m", top, full)))))
        return states, top_pop

    def _top_projector(self):
        d = self.spec.n_max + 1
        out = []
        for j in range(self.spec.n_modes):
            diag = np.zeros(self.dim_e)
            for idx, occ in enumerate(itertools.product(range(d), repeat=self.spec.n_modes)):
                if occ[j] == self.spec.n_max:
                    diag[idx] = 1.0
            out.append(qops.kron(np.eye(2), np.diag(diag)))
        return np.array(out)

    def truncation_safe(self, rho, times):
        _, top = self.exact_reduced_dynamics(rho, times)
        return top <= TRUNCATION_WARN, top

    def exact_map_superops(self, times, interaction=True):
        """Superoperators of the exact reduced map at each time."""
        out = np.zeros((len(times), 4, 4), dtype=complex)
        for i in range(2):
            for j in range(2):
                states, _ = self.exact_reduced_dynamics(qops.matrix_unit(i, j, 2), times, interaction)
                out[:, :, 2 * i + j] = states.reshape(len(times), 4)
        return out

    # -- interaction picture -------------------------------------------------

    def v_interaction(self, u):
        u0 = qops.matrix_exp(self.h0, -u)
        return u0 @ self.v @ u0.conj().T

    def _p1_coords(self, op):
        q = self.full_range_p1
        return q.conj().T @ self._left_apply(op, q)

    def v11(self, u):
        """``P1 V(u) P1`` in an orthonormal basis of the range of ``P1``."""
        return self._p1_coords(self.v_interaction(u))

    def _coupling(self, u):
        return self.full_range_p1.conj().T @ self._left_apply(self.v_interaction(u), self.k_vectors)

    def interaction_kernel(self, t, s, n_steps=None, born=False):
        """``M~(t, s) = tr_E(V01(t) W(t, s) V10(s) . I (x) Omega)``.

        ``born=True`` replaces ``W`` by the identity.
        """
        bt = self._coupling(t)
        bs = self._coupling(s)
        if born or t == s:
            return bt.conj().T @ bs
        n_steps = n_steps or max(1, int(math.ceil(abs(t - s) / 1e-3)))
        w = time_ordered_exp(self.v11, s, t, n_steps)
        return bt.conj().T @ w @ bs


def build(spec: MiniBathSpec) -> MiniBath:
    ops = annihilators(spec.n_modes, spec.n_max)
    d_e = spec.dim_env
    h_e = sum(w * b.conj().T @ b for w, b in zip(spec.mode_freqs, ops))
    big_b = sum(np.conj(f) * b + h * b.conj().T for f, h, b in zip(spec.f_coeffs, spec.h_coeffs, ops))
    h_s = spec.omega0 * qops.SIGMA_PLUS @ qops.SIGMA_MINUS
    v = qops.kron(qops.SIGMA_PLUS, big_b) + qops.kron(qops.SIGMA_MINUS, big_b.conj().T)
    energies = np.real(np.diag(h_e))
    if spec.env_state == "vacuum":
        p = np.zeros(d_e)
        p[0] = 1.0
    else:
        x = -spec.beta * (energies - energies.min())
        p = np.exp(x)
        p /= p.sum()
    omega = np.diag(p).astype(complex)
    kappa_e = np.diag(np.sqrt(p)).astype(complex)
    cols = np.flatnonzero(p > 0)
    return MiniBath(spec, h_s, h_e, v, omega, kappa_e, cols)


def time_ordered_exp(generator, s, t, n_steps):
    """Chronologically ordered ``T exp(-i int_s^t G(u) du)`` by the midpoint rule.

    ``generator`` is a callable ``u -> G(u)`` (Hermitian) or an array of
    ``n_steps`` samples at the sub-interval midpoints.
    """
    du = (t - s) / n_steps
    if callable(generator):
        samples = (generator(s + (k + 0.5) * du) for k in range(n_steps))
    else:
        samples = iter(np.asarray(generator))
    w = None
    for g in samples:
        step = qops.matrix_exp(g, du)
        w = step if w is None else step @ w
    return w


def gauge_pair(bath: MiniBath, kappa_s, unitary, t):
    """States ``kt kt^dag`` for ``k0`` and the gauge-rotated ``k0 U``."""
    k0 = qops.kron(kappa_s, bath.kappa_e)
    u = bath.propagator(t)
    kt = u @ k0
    kt_g = u @ (k0 @ unitary)
    return kt @ kt.conj().T, kt_g @ kt_g.conj().T


def random_spec(rng, max_dim=128, env=None, coupling=0.3):
    """Random weak-coupling spec for property checks."""
    while True:
        n_modes = int(rng.integers(1, 4))
        n_max = int(rng.integers(1, 5))
        if 2 * (n_max + 1) ** n_modes <= max_dim:
            break
    freqs = tuple(float(x) for x in rng.uniform(0.5, 1.5, n_modes))
    f = tuple(complex(x) for x in coupling * (rng.normal(size=n_modes) + 1j * rng.normal(size=n_modes)) / 2)
    h = tuple(complex(x) for x in coupling * (rng.normal(size=n_modes) + 1j * rng.normal(size=n_modes)) / 2)
    env = env or ("vacuum" if rng.random() < 0.5 else "gibbs")
    beta = float(rng.uniform(1.0, 3.0)) if env == "gibbs" else math.inf
    return MiniBathSpec(n_modes, n_max, freqs, f, h, float(rng.uniform(0.8, 1.2)), env, beta)
