"""Dense linear algebra on small Hilbert spaces.

Operators, states and amplitudes are plain complex ``numpy`` arrays. Maps on
``d x d`` matrices are represented either as a callable or as a ``d**2 x d**2``
superoperator acting on row-major vectorised matrices, ``vec(rho)[i*d + j] =
rho[i, j]``. With that convention ``rho -> A rho B`` has superoperator
``kron(A, B.T)``.

The Choi matrix is ``C = sum_ij |i><j| (x) Lambda(|i><j|)`` (input slot first),
so a map is completely positive iff ``C >= 0`` and trace preserving iff the
partial trace of ``C`` over the output slot is the identity.
"""

import numpy as np

HERMITIAN_RTOL = 1e-12
STATE_TOL = 1e-10

# qubit basis: index 0 is |1> (excited), index 1 is |2> (ground)
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_MINUS = SIGMA_PLUS.conj().T
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


class DimensionError(ValueError):
    pass


class NotHermitianError(ValueError):
    pass


def _square(m, name="matrix"):
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")
    return m


def is_hermitian(m, rtol=HERMITIAN_RTOL):
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    scale = max(np.max(np.abs(m)), 1.0) if m.size else 1.0
    return bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= rtol * scale)


def require_hermitian(m, rtol=HERMITIAN_RTOL, name="matrix"):
    m = _square(m, name)
    if not is_hermitian(m, rtol):
        dev = np.max(np.abs(m - m.conj().T))
        raise NotHermitianError(f"{name} is not Hermitian (max |M - M^dag| = {dev:.3e})")
    return m


def kron(a, b):
    """Kronecker product ``a (x) b``; the first factor is the slow index."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def partial_trace_env(m, dim_s, dim_e):
    """Trace out the second tensor factor of an operator on ``H_S (x) H_E``."""
    m = _square(m)
    if m.shape[0] != dim_s * dim_e:
        raise DimensionError(
            f"operator of size {m.shape[0]} does not match dim_s*dim_e = {dim_s * dim_e}"
        )
    return np.einsum("iaja->ij", m.reshape(dim_s, dim_e, dim_s, dim_e))


def partial_trace_sys(m, dim_s, dim_e):
    m = _square(m)
    if m.shape[0] != dim_s * dim_e:
        raise DimensionError(
            f"operator of size {m.shape[0]} does not match dim_s*dim_e = {dim_s * dim_e}"
        )
    return np.einsum("aiaj->ij", m.reshape(dim_s, dim_e, dim_s, dim_e))


def eigh_hermitian(h):
    h = require_hermitian(h, name="generator")
    # symmetrise so tiny anti-Hermitian noise cannot leak into the spectrum
    return np.linalg.eigh(0.5 * (h + h.conj().T))


def matrix_exp(h, t):
    """Return ``exp(-i h t)`` for Hermitian ``h`` via its eigendecomposition."""
    w, v = eigh_hermitian(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def sqrtm_psd(m):
    """Principal square root of a positive semidefinite Hermitian matrix.

    Eigenvalues below zero from rounding are clipped.
    """
    w, v = eigh_hermitian(m)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def hs_inner(a, b):
    """Hilbert-Schmidt scalar product ``(a, b) = tr(a^dag b)``."""
    return np.vdot(np.asarray(a), np.asarray(b))


def min_eig_hermitian(m):
    m = require_hermitian(m, rtol=1e-10)
    return float(np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0])


def check_density(rho, tol=STATE_TOL):
    """Validate a density operator; returns it as a complex array."""
    rho = np.asarray(rho, dtype=complex)
    rho = _square(rho, "density operator")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise ValueError("density operator is not Hermitian")
    if abs(np.trace(rho) - 1.0) > tol:
        raise ValueError(f"density operator has trace {np.trace(rho).real:.12g}")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0] < -tol:
        raise ValueError("density operator has a negative eigenvalue")
    return rho


def trace_distance(r1, r2):
    """Half the trace norm of ``r1 - r2``."""
    r1 = _square(r1)
    r2 = _square(r2)
    if r1.shape != r2.shape:
        raise DimensionError(f"state shapes differ: {r1.shape} vs {r2.shape}")
    diff = r1 - r2
    w = np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))
    return float(0.5 * np.sum(np.abs(w)))


def matrix_unit(i, j, d):
    e = np.zeros((d, d), dtype=complex)
    e[i, j] = 1.0
    return e


def superop_of_map(apply, dim):
    """Superoperator of a linear map given as a callable on ``dim x dim`` arrays."""
    s = np.zeros((dim * dim, dim * dim), dtype=complex)
    for i in range(dim):
        for j in range(dim):
            s[:, i * dim + j] = np.asarray(apply(matrix_unit(i, j, dim))).reshape(-1)
    return s


def apply_superop(s, rho):
    d = rho.shape[0]
    return (s @ rho.reshape(-1)).reshape(d, d)


def choi_from_superop(s):
    """Choi matrix of a superoperator; works on stacks ``(..., d*d, d*d)``."""
    s = np.asarray(s)
    d = int(round(np.sqrt(s.shape[-1])))
    lead = s.shape[:-2]
    # s[k, l, i, j] = Lambda(|i><j|)[k, l]  ->  C[(i, k), (j, l)]
    c = s.reshape(*lead, d, d, d, d)
    c = np.moveaxis(c, (-4, -3, -2, -1), (-3, -1, -4, -2))
    return c.reshape(*lead, d * d, d * d)


def superop_from_choi(c):
    c = np.asarray(c)
    d = int(round(np.sqrt(c.shape[-1])))
    lead = c.shape[:-2]
    s = c.reshape(*lead, d, d, d, d)
    s = np.moveaxis(s, (-3, -1, -4, -2), (-4, -3, -2, -1))
    return s.reshape(*lead, d * d, d * d)


def choi_of_map(apply, dim):
    """Choi matrix ``sum_ij |i><j| (x) apply(|i><j|)`` of a linear map."""
    return choi_from_superop(superop_of_map(apply, dim))


def choi_output_trace(c):
    """Partial trace of a Choi matrix over the output slot (identity iff TP)."""
    c = np.asarray(c)
    d = int(round(np.sqrt(c.shape[-1])))
    lead = c.shape[:-2]
    return np.einsum("...iakb,...ab->...ik", c.reshape(*lead, d, d, d, d), np.eye(d))


def trace_defect(c):
    """Max entry deviation of the output partial trace of a Choi matrix from I."""
    c = np.asarray(c)
    d = int(round(np.sqrt(c.shape[-1])))
    return np.max(np.abs(choi_output_trace(c) - np.eye(d)), axis=(-2, -1))


def choi_min_eig(c):
    """Smallest eigenvalue of (the Hermitian part of) a Choi matrix or stack."""
    c = np.asarray(c)
    herm = 0.5 * (c + np.conj(np.swapaxes(c, -1, -2)))
    return np.linalg.eigvalsh(herm)[..., 0]


def random_unitary(d, rng):
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_density(d, rng, rank=None):
    rank = d if rank is None else rank
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_hermitian(d, rng, scale=1.0):
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return scale * 0.5 * (g + g.conj().T)


def bloch_state(n):
    """Pure qubit state with Bloch vector ``n`` (normalised)."""
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n)
    return 0.5 * (np.eye(2) + n[0] * SIGMA_X + n[1] * SIGMA_Y + n[2] * SIGMA_Z)
