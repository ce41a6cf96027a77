"""One-particle cumulant hierarchy of the kinetic (Boltzmann-Kac) equation.

For a product measure, only cumulant blocks holding a single particle survive,
so each expectation factorizes into a truncated moment of particle 1 times an
ordinary moment of particle 2.  The right-hand side at order n is a fixed
polynomial in the cumulants of orders 1..n, built once with exact rationals.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial

import numpy as np

from .collision_kernel import c_coeff, trig_integral
from .errors import DomainError, RangeError
from .hierarchy import CumulantState, HierarchyParams, HierarchyTrajectory, integrate_hierarchy
from .integrators import rk4_trajectory
from .partitions import Classifier, enumerate_classifiers

Poly = dict  # monomial (decreasing tuple of cumulant orders) -> Fraction


@dataclass
class OneParticleCumulants:
    values: tuple[float, ...]  # values[k-1] is the cumulant of order k
    time: float = 0.0

    @property
    def n_star(self) -> int:
        return len(self.values)


def _mul(p: Poly, q: Poly) -> Poly:
    out: Poly = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            key = tuple(sorted(m1 + m2, reverse=True))
            out[key] = out.get(key, 0) + c1 * c2
    return out


@lru_cache(maxsize=None)
def _truncated(w: int, a: int) -> tuple:
    """E[:e^w: e^a] for one variable as a polynomial in its cumulants.

    The block holding the first plain copy takes j further plain copies and
    k Wick copies; the rest is a smaller truncated moment.
    """
    if a == 0:
        return (((), Fraction(1)),) if w == 0 else ()
    out: Poly = {}
    for j in range(a):
        for k in range(w + 1):
            weight = comb(a - 1, j) * comb(w, k)
            for mono, coef in _truncated(w - k, a - 1 - j):
                key = tuple(sorted(mono + (1 + j + k,), reverse=True))
                out[key] = out.get(key, 0) + weight * coef
    return tuple(sorted(out.items()))


@lru_cache(maxsize=None)
def kinetic_polynomial(n: int) -> tuple:
    """Exact right-hand side at order n as ((monomial, coefficient), ...)."""
    total: Poly = {}
    for ell in range(1, n + 1):
        for a in range(ell + 1):
            weight = 2 * comb(n, ell) * c_coeff(ell, a)
            prod = _mul(dict(_truncated(n - ell, a)), dict(_truncated(0, ell - a)))
            for mono, coef in prod.items():
                total[mono] = total.get(mono, 0) + weight * coef
    return tuple(sorted((m, c) for m, c in total.items() if c != 0))


def kinetic_rhs(n: int, cumulants: OneParticleCumulants | Sequence[float]) -> float:
    vals = cumulants.values if isinstance(cumulants, OneParticleCumulants) else cumulants
    if len(vals) < n:
        raise DomainError(f"need cumulants up to order {n}, got {len(vals)}")
    return float(sum(float(c) * math.prod(vals[k - 1] for k in mono) for mono, c in kinetic_polynomial(n)))


def linear_coefficient(n: int) -> Fraction:
    return dict(kinetic_polynomial(n)).get((n,), Fraction(0))


class _Compiled:
    def __init__(self, n_star: int) -> None:
        self.n_star = n_star
        groups: dict[int, list] = {}
        for n in range(1, n_star + 1):
            for mono, c in kinetic_polynomial(n):
                groups.setdefault(len(mono), []).append((n - 1, float(c), [k - 1 for k in mono]))
        self.groups = []
        for degree, items in sorted(groups.items()):
            rows = np.array([it[0] for it in items], dtype=int)
            coefs = np.array([it[1] for it in items])
            idx = np.array([it[2] for it in items], dtype=int).reshape(len(items), degree)
            self.groups.append((rows, coefs, idx))

    def rhs(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros_like(x)
        for rows, coefs, idx in self.groups:
            out += np.bincount(rows, weights=coefs * np.prod(x[idx], axis=1), minlength=x.size)
        return out


@dataclass
class KineticTrajectory:
    times: np.ndarray
    values: np.ndarray  # shape (len(times), n_star)

    def order(self, n: int) -> np.ndarray:
        return self.values[:, n - 1]


def integrate_kinetic(
    initial: OneParticleCumulants | Sequence[float],
    T_end: float | None = None,
    dt: float = 1e-3,
    times: Sequence[float] | None = None,
) -> KineticTrajectory:
    vals = initial.values if isinstance(initial, OneParticleCumulants) else tuple(initial)
    if dt <= 0:
        raise DomainError(f"dt must be positive, got {dt}")
    if times is None:
        if T_end is None:
            raise DomainError("either T_end or times is required")
        times = [0.0, float(T_end)]
    system = _Compiled(len(vals))
    times = np.asarray(times, dtype=float)
    labels = [f"kappa{n}" for n in range(1, len(vals) + 1)]
    return KineticTrajectory(times, rk4_trajectory(system.rhs, np.asarray(vals, float), times, dt, labels))


def chi_square_cumulants(n_max: int) -> list[int]:
    """Cumulants 2^(n-1) (n-1)! of the square of a standard Gaussian."""
    return [2 ** (n - 1) * factorial(n - 1) for n in range(1, n_max + 1)]


# ---------------------------------------------------------------------------
# closed moment hierarchy


def moment_rhs(m: np.ndarray) -> np.ndarray:
    """d/dt E[e^n] = 2(-E[e^n] + sum_k binom(2n,2k) I_{n-k,k} E[e^k] E[e^(n-k)]); m[0] = 1."""
    out = np.zeros_like(m)
    for n in range(1, m.size):
        acc = -m[n]
        for k in range(n + 1):
            acc += _moment_weight(n, k) * m[k] * m[n - k]
        out[n] = 2 * acc
    return out


@lru_cache(maxsize=None)
def _moment_weight(n: int, k: int) -> float:
    return float(comb(2 * n, 2 * k) * trig_integral(n - k, k))


def moment_constant(B: float) -> float:
    """C = max(2B, sup_{n>=2} 2^5 ln(n/2)/sqrt(n)); the supremum sits near n = 15."""
    peak = max(32 * math.log(n / 2) / math.sqrt(n) for n in range(2, 200))
    return max(2 * B, peak)


@dataclass
class MomentBoundReport:
    B: float
    C: float
    times: np.ndarray
    moments: np.ndarray  # (len(times), n_max + 1), column 0 is E[e^0] = 1
    Q: np.ndarray  # (len(times), n_max), Q[:, n-1] = E[e^n] / (C^(n-1) (n-1)!)
    passed: bool
    first_violation: tuple[int, float] | None


def moment_bound_check(
    initial_moments: Sequence[float] | None = None,
    n_max: int = 8,
    T_end: float = 20.0,
    dt: float = 1e-3,
    B: float | None = None,
    n_times: int = 201,
) -> MomentBoundReport:
    """Integrate the kinetic moment hierarchy and test E[e^n] <= C^(n-1) (n-1)!.

    Without ``initial_moments`` the deterministic unit energy (all moments 1)
    is used.  ``B`` defaults to the smallest value with E[e^n] <= B^(n-1).
    """
    if not 1 <= n_max <= 10:
        raise DomainError(f"n_max must lie in 1..10, got {n_max}")
    m0 = np.ones(n_max + 1) if initial_moments is None else np.concatenate([[1.0], np.asarray(initial_moments, float)[:n_max]])
    if m0.size != n_max + 1:
        raise DomainError(f"need {n_max} initial moments")
    if B is None:
        B = max([1.0] + [m0[n] ** (1 / (n - 1)) for n in range(2, n_max + 1)])
    C = moment_constant(B)
    times = np.linspace(0.0, T_end, n_times)
    traj = rk4_trajectory(moment_rhs, m0, times, dt)
    norm = np.array([C ** (n - 1) * factorial(n - 1) for n in range(1, n_max + 1)])
    Q = traj[:, 1:] / norm
    bad = np.argwhere(Q > 1.0)
    first = None
    if bad.size:
        k, n = bad[np.argmin(bad[:, 0])]
        first = (int(n) + 1, float(times[k]))
    return MomentBoundReport(B, C, times, traj, Q, first is None, first)


# ---------------------------------------------------------------------------
# accuracy against the N-particle hierarchy


@dataclass
class AccuracyReport:
    N: int
    alpha: float
    t0: float
    T: np.ndarray
    delta: dict[int, np.ndarray]  # order -> kappa_N[(n)](t0 + T) - kappa_kinetic^n(T)
    cross: dict[Classifier, np.ndarray]  # |kappa_N[r](t0 + T)| for r not fully repeated
    C_fit: dict[int, float] = field(default_factory=dict)

    def sup_delta(self, n: int) -> float:
        return float(np.max(np.abs(self.delta[n])))

    def band(self, n: int) -> float:
        return 2 * (self.N - 1) ** (-self.alpha) * factorial(n) * self.C_fit[n] ** (n * n)

    def to_json(self) -> str:
        return json.dumps(
            {
                "N": self.N,
                "alpha": self.alpha,
                "t0": self.t0,
                "T": self.T.tolist(),
                "delta": {str(n): d.tolist() for n, d in self.delta.items()},
                "sup_delta": {str(n): self.sup_delta(n) for n in self.delta},
                "cross_sup": {json.dumps(list(r)): float(np.max(v)) for r, v in self.cross.items()},
                "C_fit": {str(n): c for n, c in self.C_fit.items()},
            },
            indent=2,
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "T", "delta", "band"])
        for n, d in self.delta.items():
            for t, x in zip(self.T, d):
                w.writerow([n, repr(float(t)), repr(float(x)), repr(self.band(n))])
        return buf.getvalue()


def default_t0(params: HierarchyParams) -> float:
    return 4 * params.c * (params.n_star - 1) * math.log(params.N)


def accuracy_experiment(
    params: HierarchyParams,
    t0: float | None,
    T_end: float,
    initial: CumulantState | None = None,
    trajectory: HierarchyTrajectory | None = None,
    dt: float = 1e-3,
    n_times: int = 201,
) -> AccuracyReport:
    """Compare the N-particle hierarchy after time t0 with the kinetic hierarchy started from its marginal.

    Either an initial state (integrated here) or a precomputed trajectory whose
    output grid contains t0 + T for the requested T grid must be supplied.
    """
    if t0 is None:
        t0 = default_t0(params)
    T = np.linspace(0.0, T_end, n_times)
    if trajectory is None:
        if initial is None:
            raise DomainError("an initial state or a trajectory is required")
        grid = np.concatenate([[0.0], t0 + T]) if t0 > 0 else T
        trajectory = integrate_hierarchy(initial, params, times=grid, dt=dt)
    start = float(trajectory.times[0])
    if t0 + start + T_end > trajectory.times[-1] + 1e-9:
        raise RangeError(f"t0 + T_end = {t0 + T_end} beyond the available trajectory")
    rows = []
    for t in t0 + start + T:
        k = int(np.argmin(np.abs(trajectory.times - t)))
        if abs(trajectory.times[k] - t) > 1e-9:
            raise RangeError(f"trajectory has no sample at t={t}")
        rows.append(k)
    first = trajectory.state(rows[0])
    init = [first[(n,)] for n in range(1, params.n_star + 1)]
    kin = integrate_kinetic(init, times=T, dt=dt)
    delta = {n: trajectory.series((n,))[rows] - kin.order(n) for n in range(1, params.n_star + 1)}
    cross = {
        r: np.abs(trajectory.series(r)[rows])
        for n in range(2, params.n_star + 1)
        for r in enumerate_classifiers(n)
        if len(r) > 1
    }
    report = AccuracyReport(params.N, params.alpha, float(t0), T, delta, cross)
    for n in range(1, params.n_star + 1):
        worst = max([report.sup_delta(n)] + [float(np.max(v)) for r, v in cross.items() if r.order == n])
        scale = 2 * (params.N - 1) ** (-params.alpha) * factorial(n)
        report.C_fit[n] = max(1.0, (worst / scale) ** (1 / (n * n)))
    return report
