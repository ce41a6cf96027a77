"""Acceptance experiments with numeric margins.

Each ``criterion_*`` function runs one experiment and returns a
:class:`CriterionResult`.  ``margin`` is the relative headroom of the tightest
check (positive when passing).
"""

from __future__ import annotations

import time
from collections.abc import Callable
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from itertools import product
from math import comb, pi

import numpy as np
from scipy.integrate import quad

from .collision_kernel import trig_integral
from .hierarchy import (
    CumulantState,
    HierarchyParams,
    alpha_norm,
    build_linear_operator,
    decay_rate_fit,
    integrate_hierarchy,
    integrate_nonrepeated,
    rescale_h,
    semigroup_norm_curve,
    stationary_nonrepeated,
    stationary_state,
    unrescale_h,
)
from .kinetic import accuracy_experiment
from .partitions import (
    Classifier,
    cumulants_to_moments,
    enumerate_classifiers,
    enumerate_set_partitions,
    moments_to_cumulants,
    nonrepeated,
    repeated_classifiers,
    truncated_moment,
)
from .simulator import (
    SeededRng,
    dirac_cumulants,
    estimate_cumulants,
    sample_symmetrized_dirac,
    simulate,
    sphere_cumulants,
)

# Accuracy target of fixed-step RK4 at the default step; conservation checks use 10x this.
INTEGRATOR_TOL = 1e-10


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    margin: float
    seconds: float
    budget: float
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number}: {self.name} (margin {self.margin:+.3g}, {self.seconds:.2f}s of {self.budget:g}s)"

    def as_dict(self) -> dict:
        return asdict(self)


def _headroom(worst: float, limit: float) -> float:
    return 1.0 - worst / limit


def _run(number: int, name: str, budget: float, body: Callable[[], tuple[list[float], dict]]) -> CriterionResult:
    start = time.perf_counter()
    margins, details = body()
    seconds = time.perf_counter() - start
    margins = list(margins) + [_headroom(seconds, budget)]
    margin = float(min(margins))
    return CriterionResult(number, name, margin > 0, margin, seconds, budget, details)


def _dirac_point(N: int) -> list[int]:
    return [N] + [0] * (N - 1)


# ---------------------------------------------------------------------------


def criterion_1() -> CriterionResult:
    def body():
        quad_err = 0.0
        for a in range(9):
            for b in range(9 - a):
                val, _ = quad(lambda t: np.sin(t) ** (2 * a) * np.cos(t) ** (2 * b) / (2 * pi), -pi, pi, epsabs=1e-13, epsrel=1e-13, limit=200)
                quad_err = max(quad_err, abs(val - float(trig_integral(a, b))))
        rec_ok = all(
            trig_integral(a, b) == Fraction(2 * a - 1, 2 * a + 2 * b) * trig_integral(a - 1, b)
            for a in range(1, 17)
            for b in range(17)
        ) and all(trig_integral(0, b) == Fraction(2 * b - 1, 2 * b) * trig_integral(0, b - 1) for b in range(1, 33))
        binom_ok = all(
            sum((-1) ** m * comb(r, m) * trig_integral(m, 0) for m in range(r + 1)) == trig_integral(0, r) for r in range(17)
        )
        margins = [_headroom(quad_err, 1e-10), 1.0 if rec_ok else -1.0, 1.0 if binom_ok else -1.0]
        return margins, {"max_quadrature_error": quad_err, "recursions_exact": rec_ok, "binomial_identity_exact": binom_ok}

    return _run(1, "exact coefficients", 1.0, body)


def criterion_2() -> CriterionResult:
    def body():
        worst = 0.0
        for N in (8, 32):
            oracle = sphere_cumulants(N, 5)
            h = stationary_nonrepeated(5, N)
            nr = unrescale_h(h, 1, N)
            for n in range(1, 6):
                exact = oracle[nonrepeated(n)]
                worst = max(worst, abs(float(nr[n - 1] - exact) / exact))
            state = stationary_state(5, N)
            for n in range(2, 6):
                for r in repeated_classifiers(n):
                    exact = float(oracle[r])
                    worst = max(worst, abs(state[r] - exact) / abs(exact))
        # h_1 = 1 meets the bound with equality, so the ratio is taken over n >= 2
        bound_ratio = 0.0
        for N in (32, 128):
            for n, hn in enumerate(stationary_nonrepeated(10, N)[1:], start=2):
                bound_ratio = max(bound_ratio, float(abs(hn)) / 8 ** (n - 1))
        margins = [_headroom(worst, 1e-10), _headroom(bound_ratio, 1.0)]
        return margins, {"max_relative_error": worst, "max_hbar_over_bound": bound_ratio}

    return _run(2, "stationary oracle equivalence", 5.0, body)


def criterion_3(replicas: int = 100_000, seed: int = 20240611, N: int = 32) -> CriterionResult:
    times = [0.0, 0.5, 1.0, 2.0, 5.0]

    def body():
        base = np.zeros(N)
        base[0] = np.sqrt(N)
        v0 = sample_symmetrized_dirac(base, SeededRng(seed, 0), replicas)
        estimates = {}
        traj = simulate(v0, times, SeededRng(seed, 1), on_snapshot=lambda t, v: estimates.__setitem__(t, estimate_cumulants(v, 3)))
        initial = CumulantState.from_table(dirac_cumulants(_dirac_point(N), 3), 3)
        hier = integrate_hierarchy(initial, HierarchyParams(N, 3), times=times)
        worst_z = 0.0
        rows = []
        for k, t in enumerate(times):
            est = estimates[t]
            for n in range(1, 4):
                for r in enumerate_classifiers(n):
                    ref = hier.series(r)[k]
                    floor = 1e-9 * max(1.0, abs(ref))
                    z = abs(est.cumulants[r] - ref) / (est.stderr[r] + floor / 3)
                    worst_z = max(worst_z, z)
                    rows.append({"t": t, "classifier": list(r), "mc": est.cumulants[r], "stderr": est.stderr[r], "hierarchy": ref, "z": z})
        t0 = estimates[0.0]
        dirac_z = max(
            abs(t0.cumulants[Classifier([1, 1])] + 1) / (t0.stderr[Classifier([1, 1])] + 1e-9),
            abs(t0.cumulants[Classifier([2])] - (N - 1)) / (t0.stderr[Classifier([2])] + 1e-9),
        )
        details = {
            "max_abs_z": worst_z,
            "dirac_t0_z": dirac_z,
            "max_energy_drift": traj.max_energy_drift,
            "renormalizations": traj.renormalizations,
            "rows": rows,
        }
        return [_headroom(worst_z, 3.0), _headroom(dirac_z, 3.0), _headroom(traj.max_energy_drift, 1e-9)], details

    return _run(3, "Monte Carlo vs hierarchy", 600.0, body)


def criterion_4(N: int = 64, alpha: float = 0.5, t_end: float = 40.0) -> CriterionResult:
    times = np.linspace(0.0, t_end, 401)

    def body():
        table = dirac_cumulants(_dirac_point(N), 4)
        nr0 = [float(table[nonrepeated(n)]) for n in range(1, 5)]
        traj = integrate_nonrepeated(nr0, N, times)
        hbar = stationary_nonrepeated(4, N)
        limit_alpha = [float(hn) * (N - 1) ** ((alpha - 1) * (n - 1)) for n, hn in enumerate(hbar, start=1)]
        h_alpha = np.array([rescale_h(row, alpha, N) for row in traj])
        h_one = np.array([rescale_h(row, 1, N) for row in traj])
        rates_h, rates_xi = {}, {}
        for n in range(2, 5):
            rates_h[n] = decay_rate_fit(times, h_alpha[:, n - 1], limit_alpha[n - 1])
            rates_xi[n] = decay_rate_fit(times, h_one[:, n - 1], float(hbar[n - 1]))
        # alpha-norm distance of the repeated cumulants to stationarity
        full = integrate_hierarchy(CumulantState.from_table(table, 4), HierarchyParams(N, 4, alpha), times=times)
        stat = stationary_state(4, N)
        rates_rep = {}
        for n in range(2, 5):
            rows = repeated_classifiers(n)
            dist = [alpha_norm({r: full.series(r)[k] - stat[r] for r in rows}, alpha, n, N).norm for k in range(times.size)]
            rates_rep[n] = decay_rate_fit(times, dist)
        floor_h, floor_xi = 0.25 * 0.9, 0.5 * 0.9
        margins = [min(rates_h.values()) / floor_h - 1, min(rates_xi.values()) / floor_xi - 1, min(rates_rep.values()) / floor_h - 1]
        details = {"rates_h_alpha": rates_h, "rates_xi": rates_xi, "rates_repeated_alpha_norm": rates_rep, "floors": [floor_h, floor_xi]}
        return margins, details

    return _run(4, "cumulant decay rates", 60.0, body)


def criterion_5(N: int = 10_000, alpha: float = 0.5) -> CriterionResult:
    times = np.linspace(0.0, 40.0, 100)

    def body():
        worst = 0.0
        per_order = {}
        for n in (2, 3, 4):
            curve = semigroup_norm_curve(build_linear_operator(n, N), alpha, times)
            ratio = float(np.max(curve / (10 * np.exp(-times / 2))))
            per_order[n] = ratio
            worst = max(worst, ratio)
        return [_headroom(worst, 1.0)], {"max_curve_over_bound": per_order}

    return _run(5, "semigroup bound", 1.0, body)


def linear_profile_energies(N: int) -> list[Fraction]:
    """Energies 2i/(N-1), i = 0..N-1: evenly spread on [0, 2] with mean exactly 1."""
    return [Fraction(2 * i, N - 1) for i in range(N)]


def criterion_6(alpha: float = 0.5, T_end: float = 10.0) -> CriterionResult:
    def body():
        sups = {}
        exact_zero = True
        for N in (64, 256):
            initial = CumulantState.from_table(dirac_cumulants(linear_profile_energies(N), 2), 2)
            report = accuracy_experiment(HierarchyParams(N, 2, alpha, 0.0), 0.0, T_end, initial=initial)
            sups[N] = report.sup_delta(2)
            exact_zero &= bool(report.delta[2][0] == 0.0 and report.delta[1][0] == 0.0 and np.all(report.delta[1] == 0.0))
        ratio = sups[256] / sups[64]
        return [_headroom(ratio, 0.6), 1.0 if exact_zero else -1.0], {"sup_delta2": sups, "ratio": ratio, "exact_zeros": exact_zero}

    return _run(6, "kinetic accuracy scaling", 300.0, body)


def criterion_7(mc_replicas: int = 4000, seed: int = 7) -> CriterionResult:
    def body():
        worst_order1 = 0.0
        worst_identity = 0.0
        times = np.linspace(0.0, 10.0, 51)
        for N, make in ((32, lambda N: dirac_cumulants(_dirac_point(N), 4)), (64, lambda N: dirac_cumulants(linear_profile_energies(N), 4))):
            traj = integrate_hierarchy(CumulantState.from_table(make(N), 4), HierarchyParams(N, 4), times=times)
            worst_order1 = max(worst_order1, float(np.max(np.abs(traj.series((1,)) - 1.0))))
            for n in (2, 3, 4):
                lhs = traj.series([2] + [1] * (n - 2))
                rhs = -(N - n + 1) / (n - 1) * traj.series(nonrepeated(n))
                scale = np.maximum(1.0, np.abs(lhs))
                worst_identity = max(worst_identity, float(np.max(np.abs(lhs - rhs) / scale)))
        base = np.zeros(32)
        base[0] = np.sqrt(32)
        v0 = sample_symmetrized_dirac(base, SeededRng(seed, 0), mc_replicas)
        mc = simulate(v0, [0.0, 1.0, 5.0], SeededRng(seed, 1), on_snapshot=lambda t, v: None)
        margins = [
            _headroom(worst_order1, 1e-12) if worst_order1 > 0 else 1.0,
            _headroom(worst_identity, 10 * INTEGRATOR_TOL),
            _headroom(mc.max_energy_drift, 1e-9),
        ]
        details = {"order1_deviation": worst_order1, "identity_residual": worst_identity, "mc_energy_drift": mc.max_energy_drift}
        return margins, details

    return _run(7, "conservation invariants", 60.0, body)


# ---------------------------------------------------------------------------
# brute-force combinatorics


def _brute_partitions(items: list) -> list[list[list]]:
    """Set partitions by inserting each element into an existing block or a new one."""
    if not items:
        return [[]]
    out = []
    for p in _brute_partitions(items[1:]):
        for k in range(len(p)):
            out.append(p[:k] + [[items[0]] + p[k]] + p[k + 1 :])
        out.append([[items[0]]] + p)
    return out


def _submultisets(seq: tuple) -> set[tuple]:
    out = set()
    for mask in range(1, 1 << len(seq)):
        out.add(tuple(sorted(seq[i] for i in range(len(seq)) if mask >> i & 1)))
    return out


def _check_round_trip(rng: np.random.Generator) -> float:
    worst = 0.0
    for target in [(1,), (1, 2), (1, 1, 2), (1, 2, 3, 4), (1, 1, 2, 2, 3), (1, 2, 3, 4, 5, 6), (1, 1, 1, 2, 2, 3), (4, 4, 4, 4, 4, 4)]:
        moments = {s: rng.normal() for s in _submultisets(target)}
        cumulants = {s: moments_to_cumulants(moments, s) for s in moments}
        back = cumulants_to_moments(cumulants, target)
        ref = moments[tuple(sorted(target))]
        worst = max(worst, abs(back - ref) / max(1.0, abs(ref)))
    return worst


def _check_truncated(rng: np.random.Generator) -> float:
    worst = 0.0
    for size in range(1, 9):
        for n_plain in range(1, size + 1):
            labels = tuple(int(x) for x in rng.integers(1, 4, size=size))
            wick, plain = labels[: size - n_plain], labels[size - n_plain :]
            table = {s: rng.normal() for s in _submultisets(labels)}
            positions = list(range(size))
            brute = 0.0
            for p in _brute_partitions(positions):
                if all(any(x >= len(wick) for x in block) for block in p):
                    term = 1.0
                    for block in p:
                        term *= table[tuple(sorted(labels[x] for x in block))]
                    brute += term
            fast = truncated_moment(wick, plain, table)
            worst = max(worst, abs(fast - brute) / max(1.0, abs(brute)))
        if size <= 6:
            labels = tuple(range(size))
            table = {s: rng.normal() for s in _submultisets(labels)}
            worst = max(worst, abs(truncated_moment((), labels, table) - cumulants_to_moments(table, labels)))
    return worst


def _check_coloring(max_size: int = 8) -> tuple[int, int]:
    """Exhaustive check of the coloring inequality up to relabelling symmetry.

    The inequality is invariant under permutations of the ground set, so a
    coloring is fixed by its color-class sizes and J by how many elements it
    takes from each class.  Every set partition is then checked.
    """
    checked = 0
    violations = 0
    for size in range(1, max_size + 1):
        parts = enumerate_set_partitions(size)
        block_masks = np.zeros((len(parts), size), dtype=np.int64)
        for k, p in enumerate(parts):
            for b, block in enumerate(p):
                block_masks[k, b] = sum(1 << x for x in block)
        n_blocks = (block_masks > 0).sum(axis=1)
        masks = np.arange(1 << size)
        for classes in enumerate_classifiers(size):
            coloring = [c for c, s in enumerate(classes) for _ in range(s)]
            color_bits = np.zeros(masks.size, dtype=np.int64)
            for x in range(size):
                color_bits[(masks >> x) & 1 == 1] |= 1 << coloring[x]
            n_colors = np.array([bin(int(b)).count("1") for b in color_bits])
            n_colors[0] = 0
            for take in product(*(range(s + 1) for s in classes)):
                if sum(take) == 0:
                    continue
                J = 0
                start = 0
                for s, t in zip(classes, take):
                    J |= sum(1 << (start + i) for i in range(t))
                    start += s
                rest = ((1 << size) - 1) & ~J
                meets = (masks & J) > 0
                admissible = np.all(meets[block_masks] | (block_masks == 0), axis=1)
                lhs = n_colors[block_masks].sum(axis=1)
                rest_colors = color_bits[rest]
                m = bin(int(color_bits[J] & rest_colors)).count("1")
                rhs = bin(int(rest_colors)).count("1") + n_blocks - m
                checked += int(admissible.sum())
                violations += int(np.sum(admissible & (lhs < rhs)))
    return checked, violations


def _check_coloring_function(max_size: int = 5) -> int:
    from .partitions import coloring_bound_holds

    failures = 0
    for size in range(1, max_size + 1):
        ground = list(range(size))
        for coloring_part in enumerate_set_partitions(size):
            coloring = {x: b for b, block in enumerate(coloring_part) for x in block}
            for jmask in range(1, 1 << size):
                J = [x for x in ground if jmask >> x & 1]
                for p in enumerate_set_partitions(size):
                    if all(any(jmask >> x & 1 for x in block) for block in p):
                        failures += not coloring_bound_holds(ground, coloring, J, p)
    return failures


def criterion_8(seed: int = 8) -> CriterionResult:
    def body():
        rng = np.random.default_rng(seed)
        round_trip = _check_round_trip(rng)
        truncated = _check_truncated(rng)
        checked, violations = _check_coloring(8)
        fn_failures = _check_coloring_function(5)
        margins = [
            _headroom(round_trip, 1e-10),
            _headroom(truncated, 1e-10),
            1.0 if violations == 0 and fn_failures == 0 else -1.0,
        ]
        details = {
            "round_trip_error": round_trip,
            "truncated_moment_error": truncated,
            "coloring_instances": checked,
            "coloring_violations": violations,
            "coloring_function_failures": fn_failures,
        }
        return margins, details

    return _run(8, "combinatorics brute force", 30.0, body)


CRITERIA: dict[int, Callable[[], CriterionResult]] = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
}

SUITES = {"fast": [1, 2, 4, 5, 7, 8], "full": [1, 2, 3, 4, 5, 6, 7, 8]}


def run_suite(name: str, report: Callable[[CriterionResult], None] | None = None) -> list[CriterionResult]:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    results = []
    for number in SUITES[name]:
        res = CRITERIA[number]()
        if report:
            report(res)
        results.append(res)
    return results
