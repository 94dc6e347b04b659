"""Checks on a timeseries of qubit maps: CPTP, BLP flow, divisibility, asymptotics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import qops

CPTP_TOL = 1e-8
COND_MAX = 1e12

_R2 = 1 / np.sqrt(2)
DEFAULT_DIRECTIONS = (
    (0, 0, 1), (1, 0, 0), (0, 1, 0),
    (_R2, 0, _R2), (_R2, 0, -_R2),
    (0, _R2, _R2), (0, _R2, -_R2),
    (_R2, _R2, 0), (_R2, -_R2, 0),
    (1 / np.sqrt(3), 1 / np.sqrt(3), 1 / np.sqrt(3)),
)


def default_pairs():
    """Antipodal pure-state pairs along a fixed set of Bloch directions."""
    return [(qops.bloch_state(n), qops.bloch_state(-np.asarray(n, dtype=float))) for n in DEFAULT_DIRECTIONS]


@dataclass
class CPTPReport:
    trace_defect: np.ndarray
    choi_min_eig: np.ndarray
    tol: float

    @property
    def max_trace_defect(self):
        return float(np.max(self.trace_defect))

    @property
    def worst_min_eig(self):
        return float(np.min(self.choi_min_eig))

    @property
    def ok(self):
        return self.max_trace_defect <= self.tol and self.worst_min_eig >= -self.tol

    def first_violation(self):
        bad = np.flatnonzero((self.trace_defect > self.tol) | (self.choi_min_eig < -self.tol))
        return int(bad[0]) if bad.size else None


def verify_cptp(superops, tol=CPTP_TOL) -> CPTPReport:
    """Trace defect and smallest Choi eigenvalue of each map in a stack."""
    s = np.asarray(superops)
    if s.ndim == 2:
        s = s[None]
    c = qops.choi_from_superop(s)
    return CPTPReport(np.atleast_1d(qops.trace_defect(c)), np.atleast_1d(qops.choi_min_eig(c)), tol)


@dataclass
class BLPResult:
    times: np.ndarray
    distances: np.ndarray  # (n_pairs, N)
    rates: np.ndarray
    measure: float
    best_pair: int


def blp_flow(superops, times, pairs=None) -> BLPResult:
    """Trace-distance flow and the BLP measure over a set of state pairs.

    The measure is the largest (over pairs) integral of the positive part of
    ``dD/dt``, with the derivative from second-order finite differences.
    """
    times = np.asarray(times, dtype=float)
    if times.size < 3:
        raise ValueError("BLP flow needs at least 3 grid points")
    s = np.asarray(superops)
    pairs = default_pairs() if pairs is None else pairs
    dists = np.empty((len(pairs), times.size))
    for k, (r1, r2) in enumerate(pairs):
        diff = (s @ (np.asarray(r1) - np.asarray(r2)).reshape(-1)).reshape(-1, 2, 2)
        herm = 0.5 * (diff + np.conj(np.swapaxes(diff, 1, 2)))
        dists[k] = 0.5 * np.sum(np.abs(np.linalg.eigvalsh(herm)), axis=1)
    rates = np.gradient(dists, times, axis=1, edge_order=2)
    integrals = np.trapezoid(np.clip(rates, 0.0, None), times, axis=1)
    best = int(np.argmax(integrals))
    return BLPResult(times, dists, rates, float(integrals[best]), best)


@dataclass
class DivisibilityResult:
    t: float
    s: float
    min_eig: float | None
    condition: float

    @property
    def invertible(self):
        return self.min_eig is not None


def intermediate_min_eig(superops, i_s, i_t, times=None):
    """Smallest Choi eigenvalue of ``Phi(t, s)`` for one index pair."""
    times = np.arange(len(superops)) if times is None else times
    return divisibility_check(superops, times, [(i_t, i_s)])[0]


def divisibility_check(superops, times, pairs_ts=None, stride=None):
    """Smallest Choi eigenvalue of ``Phi(t, s) = S_t S_s^{-1}`` on pairs ``s < t``.

    ``pairs_ts`` lists index pairs ``(i_t, i_s)``; by default consecutive
    samples ``stride`` apart are used. Nearly singular ``S_s`` yields
    ``min_eig = None`` ("not invertible").
    """
    s_all = np.asarray(superops)
    times = np.asarray(times, dtype=float)
    n = times.size
    if pairs_ts is None:
        stride = stride or max(1, n // 200)
        pairs_ts = [(i + stride, i) for i in range(0, n - stride, stride)]
    out = []
    for it, i_s in pairs_ts:
        cond = float(np.linalg.cond(s_all[i_s]))
        if not np.isfinite(cond) or cond > COND_MAX:
            out.append(DivisibilityResult(times[it], times[i_s], None, cond))
            continue
        phi = s_all[it] @ np.linalg.inv(s_all[i_s])
        out.append(DivisibilityResult(times[it], times[i_s], float(qops.choi_min_eig(qops.choi_from_superop(phi))), cond))
    return out


ASYMPTOTIC_STATES = {
    "excited": qops.matrix_unit(0, 0, 2),
    "ground": qops.matrix_unit(1, 1, 2),
    "plus_x": qops.bloch_state((1, 0, 0)),
    "plus_y": qops.bloch_state((0, 1, 0)),
}


@dataclass
class AsymptoticReport:
    t: float
    finals: dict
    spread: float

    @property
    def common_fixed_state(self):
        return self.spread <= 1e-6


def asymptotics(source, t=None):
    """Images of a spanning set of states under the final map.

    ``source`` is a ``4 x 4`` superoperator (``t`` is then informational) or
    :class:`~feshbach_dyn.spinboson.WhiteNoiseParams`, in which case the map
    is taken at ``t`` (default ``50 / min`` positive rate). ``spread`` is the
    largest pairwise trace distance of the final states; a small value means
    the dynamics forgets its initial state.
    """
    from .spinboson import WhiteNoiseParams, whitenoise_map

    if isinstance(source, WhiteNoiseParams):
        rates = [g for g in (source.gamma1, source.gamma2) if g > 0]
        if not rates:
            raise ValueError("white-noise asymptotics need a positive rate")
        t_min = 20 / min(rates)
        t = 50 / min(rates) if t is None else t
        if t < t_min:
            raise ValueError(f"t = {t:g} is shorter than 20/min(rate) = {t_min:g}")
        superop = whitenoise_map(source, t)
    else:
        superop = np.asarray(source)
    finals = {name: qops.apply_superop(superop, r) for name, r in ASYMPTOTIC_STATES.items()}
    imgs = list(finals.values())
    spread = max(qops.trace_distance(a, b) for i, a in enumerate(imgs) for b in imgs[i + 1:])
    return AsymptoticReport(float("nan") if t is None else float(t), finals, spread)


@dataclass
class NonMarkovReport:
    cptp: CPTPReport
    blp: BLPResult
    divisibility: list = field(default_factory=list)
    asymptotic: AsymptoticReport | None = None
    blp_tol: float = 1e-6
    div_tol: float = 1e-8

    @property
    def divisibility_violations(self):
        return [(d.s, d.t, d.min_eig) for d in self.divisibility if d.min_eig is not None and d.min_eig < -self.div_tol]

    @property
    def min_intermediate_eig(self):
        vals = [d.min_eig for d in self.divisibility if d.min_eig is not None]
        return min(vals) if vals else None

    @property
    def flag(self):
        if not self.cptp.ok:
            return "not-cptp"
        m = self.min_intermediate_eig
        if self.blp.measure > self.blp_tol or (m is not None and m < -self.div_tol):
            return "non-markovian"
        return "markovian-on-searched-set"

    def summary(self):
        m = self.min_intermediate_eig
        return {
            "flag": self.flag,
            "max_trace_defect": self.cptp.max_trace_defect,
            "worst_choi_min_eig": self.cptp.worst_min_eig,
            "blp_measure": self.blp.measure,
            "min_intermediate_choi_eig": m,
            "divisibility_violations": len(self.divisibility_violations),
            "non_invertible_pairs": sum(1 for d in self.divisibility if d.min_eig is None),
            "asymptotic_spread": None if self.asymptotic is None else self.asymptotic.spread,
            "blp_pair": self.blp.best_pair,
        }


def analyze(superops, times, pairs=None, stride=None, cptp_tol=CPTP_TOL) -> NonMarkovReport:
    s = np.asarray(superops)
    return NonMarkovReport(
        verify_cptp(s, cptp_tol),
        blp_flow(s, times, pairs),
        divisibility_check(s, times, stride=stride),
        asymptotics(s[-1], float(np.asarray(times)[-1])),
    )
