"""Exact energy-cumulant hierarchy of the Kac model.

The state at order n is the set of exchangeable joint energy cumulants indexed by
the classifiers of n.  The all-ones (non-repeated) cumulants obey a closed
subsystem with dissipation constants D_{n,N}.  The remaining (repeated)
classifiers evolve linearly in each other, with a source from the non-repeated
cumulant and a nonlinear forcing built from products of lower orders.

The generator is derived mechanically.  A collision of the ordered pair (i, j)
moves energy P from j to i.  Differentiating the cumulant generating function
gives, for a label multiset s with L distinct labels,

    d/dt kappa[s] = 1/(N-1) sum_{i != j} sum_{l, l'} binom(s_i, l) binom(s_j, l') (-1)^l'
                    sum_a C(l+l', a) E[:e_{s - l x i - l' x j}: e_i^a e_j^(l+l'-a)]

and every truncated moment is expanded into blocks that meet the plain part.
Pairs with one label outside s give the *break* terms (weight N-L), pairs
inside s with one of l, l' zero give *fuse* terms, the rest *exchange* terms.
Coefficients are kept as exact pairs (const, inv) meaning const + inv/(N-1).
"""

from __future__ import annotations

import csv
import io
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import product
from math import comb, factorial

import numpy as np
from scipy.linalg import expm

from .collision_kernel import c_coeff, trig_integral
from .errors import DomainError, IncompleteInputError, InsufficientSignalError, SolverError
from .integrators import rk4_trajectory
from .partitions import (
    Classifier,
    CumulantTable,
    coloring_bound_holds,
    enumerate_classifiers,
    enumerate_set_partitions,
    nonrepeated,
    repeated_classifiers,
)

Key = tuple  # tuple of block classifiers of order >= 2; () is the constant term


# ---------------------------------------------------------------------------
# parameters and state


@dataclass(frozen=True)
class HierarchyParams:
    N: int
    n_star: int
    alpha: float = 0.5
    c: float = 0.0

    def __post_init__(self) -> None:
        if self.N < 2:
            raise DomainError(f"N must be at least 2, got {self.N}")
        if self.n_star < 1:
            raise DomainError(f"n_star must be positive, got {self.n_star}")
        if 2 * self.n_star > self.N:
            raise DomainError(f"n_star={self.n_star} exceeds N/2 for N={self.N}")
        if not 0 < self.alpha < 1:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.c < 0:
            raise DomainError(f"c must be nonnegative, got {self.c}")


@dataclass
class CumulantState:
    """Cumulants for every classifier of orders 1..n_star at one time."""

    values: dict[int, dict[Classifier, float]]
    time: float = 0.0

    @property
    def n_star(self) -> int:
        return max(self.values)

    def __getitem__(self, r: Iterable[int]) -> float:
        r = Classifier(r)
        try:
            return self.values[r.order][r]
        except KeyError:
            raise IncompleteInputError(f"state has no value for {list(r)}") from None

    def nonrepeated(self, n: int) -> float:
        return self[nonrepeated(n)]

    def repeated_vector(self, n: int) -> np.ndarray:
        return np.array([self[r] for r in repeated_classifiers(n)], dtype=float)

    @classmethod
    def from_table(cls, table: CumulantTable | Mapping, n_star: int, time: float = 0.0) -> "CumulantState":
        get = table.__getitem__
        values = {n: {r: float(get(r)) for r in enumerate_classifiers(n)} for n in range(1, n_star + 1)}
        return cls(values, time)

    def as_table(self) -> CumulantTable:
        return CumulantTable({r: v for level in self.values.values() for r, v in level.items()})


@dataclass
class OperatorMatrix:
    """Linear part of the order-n repeated hierarchy over the repeated classifiers.

    ``M`` is the N-independent part, ``R`` the part carrying 1/(N-1), and
    ``source`` the coupling of each row to the non-repeated cumulant.
    """

    order: int
    N: int
    classifiers: list[Classifier]
    M: np.ndarray
    R: np.ndarray
    source: np.ndarray

    @property
    def full(self) -> np.ndarray:
        return self.M + self.R


@dataclass
class AlphaNormReport:
    order: int
    alpha: float
    norm: float
    weighted: dict[Classifier, float]


# ---------------------------------------------------------------------------
# closed non-repeated subsystem


def _dissipation_exact(n: int, N: int) -> Fraction:
    if n == 1:
        return Fraction(0)
    if n < 1:
        raise DomainError(f"order must be positive, got {n}")
    if n > N:
        raise DomainError(f"order {n} exceeds the particle count {N}")
    return Fraction(n, 4) + Fraction(2 * n * n - n, 4 * (N - 1))


def dissipation_coeff(n: int, N: int) -> float:
    """D_{n,N} = n/4 + (2n^2 - n)/(4(N-1)); zero for n = 1."""
    return float(_dissipation_exact(n, N))


def a_mn_coeff(m: int, n: int) -> int:
    """A_{m,n} = 2 (n-2)! / ((m-1)! (n-m-1)!)."""
    if not 1 <= m <= n - 1:
        raise DomainError(f"m must lie in 1..{n - 1}, got {m}")
    return 2 * factorial(n - 2) // (factorial(m - 1) * factorial(n - m - 1))


def nonrepeated_rhs(n: int, values: Sequence[float], N: int) -> float:
    """Time derivative of the order-n non-repeated cumulant.

    ``values[k-1]`` is the non-repeated cumulant of order k, for k = 1..n.
    """
    if n == 1:
        return 0.0
    if len(values) < n:
        raise IncompleteInputError(f"need non-repeated values up to order {n}")
    lower = sum(a_mn_coeff(m, n) * values[m - 1] * values[n - m - 1] for m in range(1, n))
    return -dissipation_coeff(n, N) * values[n - 1] - n * (n - 1) / (4 * (N - 1)) * lower


def _scale(n: int, alpha: float, N: int):
    exponent = alpha * (n - 1)
    if float(exponent).is_integer():
        weight = (N - 1) ** int(exponent)
    else:
        weight = float(N - 1) ** exponent
    return (-1) ** (n - 1) * weight


def rescale_h(values: Sequence, alpha: float, N: int) -> list:
    """h_n = (-1)^(n-1) (N-1)^(alpha (n-1)) / (n-1)! * kappa_n for n = 1, 2, ..."""
    return [_scale(n, alpha, N) * v / factorial(n - 1) for n, v in enumerate(values, start=1)]


def unrescale_h(h: Sequence, alpha: float, N: int) -> list:
    """Inverse of :func:`rescale_h`."""
    return [v * factorial(n - 1) / _scale(n, alpha, N) for n, v in enumerate(h, start=1)]


def stationary_nonrepeated(n_max: int, N: int) -> list[Fraction]:
    """Exact stationary h_1..h_{n_max} at alpha = 1 from h_n = n/(2 D_n) sum h_m h_{n-m}."""
    if n_max > N:
        raise DomainError(f"n_max={n_max} exceeds N={N}")
    h = [Fraction(1)]
    for n in range(2, n_max + 1):
        conv = sum(h[m - 1] * h[n - m - 1] for m in range(1, n))
        h.append(Fraction(n, 2) / _dissipation_exact(n, N) * conv)
    return h


def catalan_majorant(n: int) -> int:
    """a_n = 2^n/(4(2n-1)) (2n)!/(n!)^2, the solution of a_1 = 1, a_n = 2 sum a_m a_{n-m}."""
    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    value = Fraction(2**n, 4 * (2 * n - 1)) * comb(2 * n, n)
    assert value.denominator == 1
    return int(value)


def integrate_nonrepeated(
    initial: Sequence[float], N: int, times: Sequence[float], dt: float = 1e-3
) -> np.ndarray:
    """Trajectory of the non-repeated cumulants of orders 1..len(initial).

    Returns an array of shape (len(times), len(initial)).
    """
    n_max = len(initial)
    D = np.array([dissipation_coeff(n, N) for n in range(1, n_max + 1)])
    pairs = [
        [(m - 1, n - m - 1, -n * (n - 1) / (4 * (N - 1)) * a_mn_coeff(m, n)) for m in range(1, n)]
        for n in range(1, n_max + 1)
    ]

    def rhs(x: np.ndarray) -> np.ndarray:
        out = -D * x
        for k in range(1, n_max):
            out[k] += sum(w * x[i] * x[j] for i, j, w in pairs[k])
        out[0] = 0.0
        return out

    return rk4_trajectory(rhs, np.asarray(initial, dtype=float), times, dt)


# ---------------------------------------------------------------------------
# mechanical generator of the repeated hierarchy


def _block_key(blocks: list[Classifier]) -> Key:
    return tuple(sorted((b for b in blocks if b.order > 1), key=lambda b: (b.order, b), reverse=True))


def _add(terms: dict, key: Key, const: Fraction, inv: Fraction) -> None:
    acc = terms.setdefault(key, [Fraction(0), Fraction(0)])
    acc[0] += const
    acc[1] += inv


def _expand_expectation(
    terms: dict, const: Fraction, inv: Fraction, wick: list[int], plain: list[int], check_coloring: bool
) -> None:
    """Add const/inv times E[:e_wick: e_plain] expanded into cumulant products.

    Blocks are built by partitioning the plain positions and attaching every
    Wick position to one of those blocks, which enumerates exactly the
    partitions whose blocks all meet the plain part.
    """
    if const == 0 and inv == 0:
        return
    n_wick = len(wick)
    seq = wick + plain
    for plain_part in enumerate_set_partitions(len(plain)):
        k = len(plain_part)
        for assign in product(range(k), repeat=n_wick):
            blocks_pos = [[n_wick + p for p in block] for block in plain_part]
            for w, b in enumerate(assign):
                blocks_pos[b].append(w)
            blocks = [Classifier(_multiplicities(seq[p] for p in pos)) for pos in blocks_pos]
            if k > 1 and check_coloring:
                coloring = dict(enumerate(seq))
                if not coloring_bound_holds(range(len(seq)), coloring, range(n_wick, len(seq)), blocks_pos):
                    raise AssertionError(f"coloring bound violated for wick={wick} plain={plain}")
            key = (blocks[0],) if k == 1 else _block_key(blocks)
            _add(terms, key, const, inv)


def _multiplicities(labels: Iterable[int]) -> list[int]:
    counts: dict[int, int] = {}
    for x in labels:
        counts[x] = counts.get(x, 0) + 1
    return list(counts.values())


def _row_terms(s: Classifier, check_coloring: bool = True) -> dict[Key, list[Fraction]]:
    L = len(s)
    mult = list(s)
    new = L
    terms: dict[Key, list[Fraction]] = {}

    def wick_labels(counts: list[int]) -> list[int]:
        return [x for x, c in enumerate(counts) for _ in range(c)]

    for x in range(L):
        for ell in range(1, mult[x] + 1):
            weight = comb(mult[x], ell)
            rest = mult.copy()
            rest[x] -= ell
            wick = wick_labels(rest)
            for a in range(ell + 1):
                c = weight * c_coeff(ell, a)
                # break: partner outside the sequence, N - L choices, both orientations
                _expand_expectation(terms, 2 * c, -2 * (L - 1) * c, wick, [x] * a + [new] * (ell - a), check_coloring)
                # fuse: partner inside the sequence, both orientations
                for y in range(L):
                    if y != x:
                        _expand_expectation(terms, Fraction(0), 2 * c, wick, [x] * a + [y] * (ell - a), check_coloring)
    for x in range(L):
        for y in range(L):
            if y == x:
                continue
            for ell in range(1, mult[x] + 1):
                for ell2 in range(1, mult[y] + 1):
                    weight = comb(mult[x], ell) * comb(mult[y], ell2) * (-1) ** ell2
                    rest = mult.copy()
                    rest[x] -= ell
                    rest[y] -= ell2
                    wick = wick_labels(rest)
                    m = ell + ell2
                    for a in range(m + 1):
                        c = weight * c_coeff(m, a)
                        _expand_expectation(terms, Fraction(0), c, wick, [x] * a + [y] * (m - a), check_coloring)
    return {k: v for k, v in terms.items() if v[0] != 0 or v[1] != 0}


@lru_cache(maxsize=None)
def generator_terms(n: int) -> dict[Classifier, dict[Key, tuple[Fraction, Fraction]]]:
    """Exact generator rows for every classifier of order n (including all-ones).

    Each row maps a key to (const, inv), meaning a coefficient const + inv/(N-1)
    multiplying the product of the cumulants in the key.  A key holding one
    classifier of order n is a linear term; every other key is a product of
    lower-order cumulants (first-order factors equal one and are omitted).
    """
    return {s: {k: (v[0], v[1]) for k, v in _row_terms(s).items()} for s in enumerate_classifiers(n)}


def _is_linear(key: Key, n: int) -> bool:
    return len(key) == 1 and key[0].order == n


def build_linear_operator(n: int, N: int) -> OperatorMatrix:
    """Assemble M_n, R_{n,N} and the non-repeated source coupling at order n."""
    if n < 2:
        raise DomainError(f"order must be at least 2, got {n}")
    if N < n:
        raise DomainError(f"N={N} is smaller than the order {n}")
    rows = repeated_classifiers(n)
    pos = {r: k for k, r in enumerate(rows)}
    one = nonrepeated(n)
    M = np.zeros((len(rows), len(rows)))
    R = np.zeros_like(M)
    source = np.zeros(len(rows))
    gen = generator_terms(n)
    for r in rows:
        for key, (const, inv) in gen[r].items():
            if not _is_linear(key, n):
                continue
            col = key[0]
            if col == one:
                source[pos[r]] += float(const + inv / (N - 1))
            else:
                M[pos[r], pos[col]] += float(const)
                R[pos[r], pos[col]] += float(inv / (N - 1))
    return OperatorMatrix(n, N, rows, M, R, source)


def _key_value(key: Key, state: CumulantState | CumulantTable):
    out = 1.0
    for r in key:
        out *= state[r]
    return out


def nonlinear_term(n: int, state: CumulantState | CumulantTable, N: int) -> np.ndarray:
    """Products of lower-order cumulants forcing the repeated rows of order n."""
    rows = repeated_classifiers(n)
    gen = generator_terms(n)
    out = np.zeros(len(rows))
    for k, r in enumerate(rows):
        for key, (const, inv) in gen[r].items():
            if _is_linear(key, n):
                continue
            out[k] += float(const + inv / (N - 1)) * _key_value(key, state)
    return out


def generic_rhs(n: int, state: CumulantState | CumulantTable, N: int) -> dict[Classifier, float]:
    """Time derivative of every order-n cumulant straight from the generator.

    Unlike the assembled system, the all-ones row here is not closed by the
    conservation identity; comparing the two checks that identity.
    """
    out: dict[Classifier, float] = {}
    for r, row in generator_terms(n).items():
        out[r] = sum(float(const + inv / (N - 1)) * _key_value(key, state) for key, (const, inv) in row.items())
    return out


# ---------------------------------------------------------------------------
# compiled full system


class _CompiledSystem:
    """The hierarchy up to n_star as x' = A x + sum of monomials, over a flat index."""

    def __init__(self, n_star: int, N: int) -> None:
        self.n_star = n_star
        self.N = N
        self.keys: list[Classifier] = [r for n in range(1, n_star + 1) for r in enumerate_classifiers(n)]
        self.index = {r: k for k, r in enumerate(self.keys)}
        size = len(self.keys)
        A = np.zeros((size, size))
        monomials: dict[int, list[tuple[int, float, tuple[int, ...]]]] = {}

        def add_monomial(row: int, coef: float, factors: Sequence[Classifier]) -> None:
            idx = tuple(self.index[f] for f in factors)
            monomials.setdefault(len(idx), []).append((row, coef, idx))

        for n in range(2, n_star + 1):
            one = nonrepeated(n)
            i_one = self.index[one]
            A[i_one, i_one] = -dissipation_coeff(n, N)
            for m in range(1, n):
                w = -n * (n - 1) / (4 * (N - 1)) * a_mn_coeff(m, n)
                add_monomial(i_one, w, [f for f in (nonrepeated(m), nonrepeated(n - m)) if f.order > 1])
            op = build_linear_operator(n, N)
            cols = [self.index[c] for c in op.classifiers]
            for k, r in enumerate(op.classifiers):
                row = self.index[r]
                A[row, cols] += op.full[k]
                A[row, i_one] += op.source[k]
                for key, (const, inv) in generator_terms(n)[r].items():
                    if not _is_linear(key, n):
                        add_monomial(row, float(const + inv / (N - 1)), key)
        self.A = A
        self.constant = np.zeros(size)
        self.groups = []
        for degree, items in sorted(monomials.items()):
            rows = np.array([it[0] for it in items], dtype=int)
            coefs = np.array([it[1] for it in items])
            if degree == 0:
                np.add.at(self.constant, rows, coefs)
                continue
            idx = np.array([it[2] for it in items], dtype=int).reshape(len(items), degree)
            self.groups.append((rows, coefs, idx))

    def rhs(self, x: np.ndarray) -> np.ndarray:
        out = self.A @ x + self.constant
        for rows, coefs, idx in self.groups:
            vals = coefs * np.prod(x[idx], axis=1)
            out += np.bincount(rows, weights=vals, minlength=x.size)
        out[0] = 0.0
        return out

    def vector(self, state: CumulantState) -> np.ndarray:
        x = np.array([state[r] for r in self.keys], dtype=float)
        return x

    def state(self, x: np.ndarray, time: float) -> CumulantState:
        values: dict[int, dict[Classifier, float]] = {}
        for r, v in zip(self.keys, x):
            values.setdefault(r.order, {})[r] = float(v)
        return CumulantState(values, time)


@lru_cache(maxsize=32)
def _compiled(n_star: int, N: int) -> _CompiledSystem:
    return _CompiledSystem(n_star, N)


@dataclass
class HierarchyTrajectory:
    times: np.ndarray
    classifiers: list[Classifier]
    values: np.ndarray  # shape (len(times), len(classifiers))
    N: int
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self._index = {r: k for k, r in enumerate(self.classifiers)}

    def series(self, r: Iterable[int]) -> np.ndarray:
        return self.values[:, self._index[Classifier(r)]]

    def state(self, k: int) -> CumulantState:
        values: dict[int, dict[Classifier, float]] = {}
        for r, v in zip(self.classifiers, self.values[k]):
            values.setdefault(r.order, {})[r] = float(v)
        return CumulantState(values, float(self.times[k]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "order", "classifier", "value"])
        for t, row in zip(self.times, self.values):
            for r, v in zip(self.classifiers, row):
                writer.writerow([repr(float(t)), r.order, "[" + ",".join(map(str, r)) + "]", repr(float(v))])
        return buf.getvalue()


def integrate_hierarchy(
    initial: CumulantState,
    params: HierarchyParams,
    t_end: float | None = None,
    dt: float = 1e-3,
    times: Sequence[float] | None = None,
) -> HierarchyTrajectory:
    """Integrate all orders up to ``params.n_star`` with classical RK4.

    Output is reported at ``times`` (relative to the initial time) or, when
    omitted, at ``[0, t_end]``.
    """
    if dt <= 0:
        raise DomainError(f"dt must be positive, got {dt}")
    if abs(initial[(1,)] - 1.0) > 1e-12:
        raise DomainError(f"first-order cumulant must equal 1, got {initial[(1,)]}")
    if times is None:
        if t_end is None:
            raise DomainError("either t_end or times is required")
        times = [0.0, float(t_end)]
    times = np.asarray(times, dtype=float)
    system = _compiled(params.n_star, params.N)
    x0 = system.vector(initial)
    labels = ["[" + ",".join(map(str, r)) + "]" for r in system.keys]
    values = rk4_trajectory(system.rhs, x0, times, dt, labels)
    return HierarchyTrajectory(times + initial.time, list(system.keys), values, params.N)


# ---------------------------------------------------------------------------
# stationary solutions


def stationary_repeated(n: int, N: int, lower: CumulantState | CumulantTable) -> dict[Classifier, float]:
    """Solve (M_n + R_{n,N}) k + N_<[k] + source * k_nr = 0 for the repeated order-n values.

    ``lower`` must supply all orders below n and the order-n non-repeated value.
    """
    op = build_linear_operator(n, N)
    rhs = -(nonlinear_term(n, lower, N) + op.source * lower[nonrepeated(n)])
    A = op.full
    scale = np.abs(A).sum(axis=1).max()
    smallest = np.linalg.svd(A, compute_uv=False).min()
    if smallest < 1e-12 * scale:
        raise SolverError(f"order-{n} operator is singular (condition estimate {scale / max(smallest, 1e-300):.3e})")
    sol = np.linalg.solve(A, rhs)
    return dict(zip(op.classifiers, sol.tolist()))


def stationary_state(n_max: int, N: int) -> CumulantState:
    """Stationary cumulants of all classifiers up to ``n_max`` from the hierarchy alone."""
    h = stationary_nonrepeated(n_max, N)
    kappa_nr = unrescale_h(h, 1, N)
    values: dict[int, dict[Classifier, float]] = {1: {Classifier([1]): 1.0}}
    state = CumulantState(values)
    for n in range(2, n_max + 1):
        values[n] = {nonrepeated(n): float(kappa_nr[n - 1])}
        values[n].update(stationary_repeated(n, N, state))
    return state


# ---------------------------------------------------------------------------
# norms and fits


def _weights(classifiers: Sequence[Classifier], alpha: float, N: int) -> np.ndarray:
    return np.array([float(N - 1) ** (alpha * (len(r) - 1)) for r in classifiers])


def alpha_norm(values: Mapping[Classifier, float] | Sequence[float], alpha: float, n: int, N: int) -> AlphaNormReport:
    """Weighted supremum of |kappa_r| (N-1)^(alpha (len(r)-1)) over the repeated classifiers."""
    rows = repeated_classifiers(n)
    if isinstance(values, Mapping):
        missing = [r for r in rows if Classifier(r) not in {Classifier(k) for k in values}]
        if missing:
            raise IncompleteInputError(f"missing values for {[list(r) for r in missing]}")
        lookup = {Classifier(k): v for k, v in values.items()}
        vec = np.array([lookup[r] for r in rows], dtype=float)
    else:
        vec = np.asarray(values, dtype=float)
        if vec.shape != (len(rows),):
            raise IncompleteInputError(f"expected {len(rows)} values, got shape {vec.shape}")
    weighted = np.abs(vec) * _weights(rows, alpha, N)
    return AlphaNormReport(n, alpha, float(weighted.max()), dict(zip(rows, weighted.tolist())))


def induced_alpha_norm(A: np.ndarray, classifiers: Sequence[Classifier], alpha: float, N: int) -> float:
    """Operator norm induced by the weighted supremum norm."""
    w = _weights(classifiers, alpha, N)
    return float((np.abs(A) * w[:, None] / w[None, :]).sum(axis=1).max())


def semigroup_norm_curve(op: OperatorMatrix, alpha: float, times: Sequence[float], part: str = "M") -> np.ndarray:
    """Induced alpha-norm of exp(t A) on a time grid, with A the M part (default) or the full matrix."""
    A = {"M": op.M, "full": op.full}[part]
    return np.array([induced_alpha_norm(expm(t * A), op.classifiers, alpha, op.N) for t in times])


def semigroup_threshold(n_star: int, alpha: float) -> int:
    """Smallest N_0 with 80 n* 5^n* / N_0^alpha <= 9."""
    return int(np.ceil((80 * n_star * 5**n_star / 9) ** (1 / alpha)))


def decay_rate_fit(
    times: Sequence[float], values: Sequence[float], floor: float = 0.0, noise: float = 1e-10
) -> float:
    """Exponential decay rate of |value - floor|.

    Samples whose deviation is at most ten times ``noise`` are discarded; the
    rate is the least-squares slope of the log-deviation over the second half
    of the longest remaining contiguous run, where slower modes dominate.
    """
    t = np.asarray(times, dtype=float)
    dev = np.abs(np.asarray(values, dtype=float) - floor)
    if t.size < 10:
        raise InsufficientSignalError(f"need at least 10 samples, got {t.size}")
    above = dev > 10 * noise
    best_start, best_len, start = 0, 0, None
    for k, flag in enumerate(np.append(above, False)):
        if flag and start is None:
            start = k
        elif not flag and start is not None:
            if k - start > best_len:
                best_start, best_len = start, k - start
            start = None
    if best_len < 8:
        raise InsufficientSignalError("series never rises above its noise floor long enough to fit")
    lo = best_start + best_len // 2
    hi = best_start + best_len
    slope = np.polyfit(t[lo:hi], np.log(dev[lo:hi]), 1)[0]
    return float(-slope)


def mn_diagonal_formula(r: Classifier) -> Fraction:
    """Closed form 2 sum_i (2 I_{r_i,0} - 1) for the diagonal of M_n."""
    return 2 * sum(2 * trig_integral(p, 0) - 1 for p in r)
