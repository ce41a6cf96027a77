import itertools
from fractions import Fraction
from math import comb

import numpy as np
import pytest
from scipy.special import gammaln

import kac.hierarchy as hierarchy
from kac.errors import DomainError, InsufficientSignalError, IncompleteInputError
from kac.hierarchy import (
    CumulantState,
    HierarchyParams,
    a_mn_coeff,
    alpha_norm,
    build_linear_operator,
    catalan_majorant,
    decay_rate_fit,
    dissipation_coeff,
    generic_rhs,
    integrate_hierarchy,
    integrate_nonrepeated,
    mn_diagonal_formula,
    nonlinear_term,
    nonrepeated_rhs,
    rescale_h,
    semigroup_norm_curve,
    semigroup_threshold,
    stationary_nonrepeated,
    stationary_state,
    unrescale_h,
)
from kac.partitions import (
    Classifier,
    canonical_label_sequence,
    classifier_of,
    enumerate_classifiers,
    moments_to_cumulants,
    nonrepeated,
    repeated_classifiers,
)
from kac.simulator import dirac_cumulants, sphere_moment


def dirichlet_moment(N: int, r) -> float:
    # E[prod e_l^{r_l}] on the sphere via Gamma functions: e/N ~ Dirichlet(1/2, ..., 1/2)
    K = sum(r)
    log = K * np.log(N) + gammaln(N / 2) - gammaln(N / 2 + K)
    log += sum(gammaln(0.5 + k) - gammaln(0.5) for k in r)
    return float(np.exp(log))


def dirichlet_cumulant(N: int, r) -> float:
    return moments_to_cumulants(lambda labels: dirichlet_moment(N, classifier_of(labels, labels=True)), canonical_label_sequence(r))


# ---- brute-force generator oracle ---------------------------------------------


def generator_derivatives(base: np.ndarray, n_max: int) -> tuple[dict, dict]:
    """Exact moments and their time derivatives for a symmetrized Dirac measure.

    Averages over every permutation of ``base`` and over every ordered pair
    rotation; the angle average is a trapezoid rule, exact for the
    trigonometric polynomials involved.
    """
    N = base.size
    perms = base[np.array(list(itertools.permutations(range(N))))]
    theta = np.linspace(-np.pi, np.pi, 64, endpoint=False)
    c, s = np.cos(theta), np.sin(theta)
    e0 = perms**2
    rotated = []
    for i, j in itertools.permutations(range(N), 2):
        vi, vj = perms[:, i, None], perms[:, j, None]
        e = np.repeat(e0[:, :, None], theta.size, axis=2)
        e[:, i] = (c * vi + s * vj) ** 2
        e[:, j] = (-s * vi + c * vj) ** 2
        rotated.append(e)
    moments, derivs = {}, {}
    for n in range(1, n_max + 1):
        for r in enumerate_classifiers(n):
            mono0 = np.prod([e0[:, pos] ** k for pos, k in enumerate(r)], axis=0)
            m = mono0.mean()
            d = sum((np.prod([e[:, pos] ** k for pos, k in enumerate(r)], axis=0)).mean() - m for e in rotated)
            moments[r] = m
            derivs[r] = d / (N - 1)
    return moments, derivs


@pytest.fixture(scope="module")
def brute_oracle():
    rng = np.random.default_rng(11)
    N = 6
    energies = rng.exponential(size=N)
    energies *= N / energies.sum()
    base = np.sqrt(energies)
    moments, derivs = generator_derivatives(base, 4)
    return N, energies, moments, derivs


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_generator_against_brute_force(brute_oracle, n):
    N, energies, moments, derivs = brute_oracle
    h = 1e-30
    perturbed = lambda labels: complex(moments[classifier_of(labels, labels=True)], h * derivs[classifier_of(labels, labels=True)])
    table = dirac_cumulants(list(energies), n)
    rhs = generic_rhs(n, table, N)
    for r in enumerate_classifiers(n):
        expected = moments_to_cumulants(perturbed, canonical_label_sequence(r)).imag / h
        assert rhs[r] == pytest.approx(expected, rel=1e-9, abs=1e-10)


# ---- non-repeated subsystem ---------------------------------------------------


def test_dissipation_examples():
    assert dissipation_coeff(2, 4) == pytest.approx(1.0)
    assert dissipation_coeff(1, 10) == 0
    for N in range(2, 65):
        for n in range(2, N + 1):
            assert dissipation_coeff(n, N) >= n / 4
    with pytest.raises(DomainError):
        dissipation_coeff(5, 4)


def test_a_mn_examples():
    assert a_mn_coeff(1, 2) == 2
    assert a_mn_coeff(2, 5) == 6
    for n in range(2, 12):
        for m in range(1, n):
            assert a_mn_coeff(m, n) == a_mn_coeff(n - m, n)


@pytest.mark.parametrize("N", [4, 8, 32])
def test_nonrepeated_rhs_n2(N):
    x = 0.37
    assert nonrepeated_rhs(2, [1.0, x], N) == pytest.approx(-dissipation_coeff(2, N) * x - 1 / (N - 1))
    assert nonrepeated_rhs(2, [1.0, -2 / (N + 2)], N) == pytest.approx(0.0, abs=1e-15)


def test_nonrepeated_rhs_vanishes_at_stationary_point():
    N = 16
    kappa = [float(k) for k in unrescale_h(stationary_nonrepeated(6, N), 1, N)]
    for n in range(1, 7):
        assert nonrepeated_rhs(n, kappa, N) == pytest.approx(0.0, abs=1e-13)


def test_nonrepeated_rhs_linear_in_top_order():
    N = 12
    vals = [1.0, -0.2, 0.1, 0.4]
    f = lambda x: nonrepeated_rhs(4, vals[:3] + [x], N)
    assert f(2.0) - f(1.0) == pytest.approx(f(1.0) - f(0.0))
    assert f(1.0) - f(0.0) == pytest.approx(-dissipation_coeff(4, N))


def test_rescale_examples():
    for N in (4, 9, 33):
        assert rescale_h([1.0], 0.3, N)[0] == 1.0
        h = rescale_h([1.0, -2 / (N + 2)], 1, N)
        assert h[1] == pytest.approx(2 * (N - 1) / (N + 2))
        assert h[1] == pytest.approx(1 / dissipation_coeff(2, N))
    vals = [1.0, -0.3, 0.21, -0.05, 0.7]
    for alpha in (0.25, 0.5, 1.0):
        assert unrescale_h(rescale_h(vals, alpha, 40), alpha, 40) == pytest.approx(vals, rel=1e-15)


def test_stationary_nonrepeated_h2():
    for N in (4, 8, 32, 128):
        assert stationary_nonrepeated(2, N)[1] == Fraction(2 * (N - 1), N + 2)


@pytest.mark.parametrize("N", [8, 32, 128])
def test_stationary_nonrepeated_bound(N):
    h = stationary_nonrepeated(min(10, N), N)
    for n, value in enumerate(h, start=1):
        assert abs(value) <= 8 ** (n - 1)


def test_stationary_nonrepeated_large_N_limit():
    # as N grows the recursion tends to h_n = n/(2 n/4) sum = 2 sum h_m h_{n-m}
    h = stationary_nonrepeated(8, 10**9)
    for n in range(1, 9):
        assert float(h[n - 1]) == pytest.approx(catalan_majorant(n), rel=1e-6)
        assert abs(h[n - 1]) <= catalan_majorant(n)


@pytest.mark.parametrize("N", [8, 16, 32])
def test_stationary_nonrepeated_matches_oracle(N):
    kappa = unrescale_h(stationary_nonrepeated(5, N), 1, N)
    for n in range(1, 6):
        assert float(kappa[n - 1]) == pytest.approx(dirichlet_cumulant(N, (1,) * n), rel=1e-10)


def test_catalan_majorant():
    assert catalan_majorant(1) == 1
    assert catalan_majorant(2) == 2
    assert catalan_majorant(5) == 224
    a = [1]
    for n in range(2, 15):
        a.append(2 * sum(a[m - 1] * a[n - m - 1] for m in range(1, n)))
        assert catalan_majorant(n) == a[-1]
        assert a[-1] == 2 ** (n - 1) * comb(2 * n - 2, n - 1) // n


def test_integrate_nonrepeated_n2_closed_form():
    N = 32
    times = np.linspace(0, 5, 11)
    x0 = -1.0
    traj = integrate_nonrepeated([1.0, x0], N, times)
    D, bar = dissipation_coeff(2, N), -2 / (N + 2)
    assert traj[:, 1] == pytest.approx(np.exp(-D * times) * (x0 - bar) + bar, abs=1e-10)
    assert np.all(traj[:, 0] == 1.0)


# ---- operators ---------------------------------------------------------------


def test_m2_entry():
    op = build_linear_operator(2, 50)
    assert op.classifiers == [Classifier((2,))]
    assert op.M[0, 0] == pytest.approx(-0.5)


@pytest.mark.parametrize("n", range(2, 7))
def test_m_diagonal_bounds(n):
    op = build_linear_operator(n, 100)
    for k, r in enumerate(op.classifiers):
        assert op.M[k, k] == pytest.approx(float(mn_diagonal_formula(r)), abs=1e-14)
        assert op.M[k, k] <= -0.5
        if r != Classifier((2,) + (1,) * (n - 2)):
            assert op.M[k, k] <= -0.75
    assert np.abs(op.M).sum(axis=1).max() <= 2 * n * 5**n


@pytest.mark.parametrize("n", range(2, 6))
def test_source_is_beta(n):
    from kac.collision_kernel import beta_coeff

    N = 23
    op = build_linear_operator(n, N)
    row = op.classifiers.index(Classifier((2,) + (1,) * (n - 2)))
    assert op.source[row] == pytest.approx(float(beta_coeff(n, N)))
    others = [k for k in range(len(op.classifiers)) if k != row]
    assert np.all(op.source[others] == 0)


def test_order2_row_hand_expansion():
    # averaging 2 e_1 P + P^2 over the angle gives d/dt kappa_(2) = -kappa_(2)/2 + 3 kappa_(1,1)/2 + 1
    N = 20
    for k2, k11 in [(2.0, 0.0), (0.3, -0.7), (5.0, 1.1)]:
        table = {(1,): 1.0, (2,): k2, (1, 1): k11}
        expected = -0.5 * k2 + 1.5 * k11 + 1.0
        assert generic_rhs(2, table, N)[Classifier((2,))] == pytest.approx(expected)
        op = build_linear_operator(2, N)
        assembled = op.full[0, 0] * k2 + op.source[0] * k11 + nonlinear_term(2, table, N)[0]
        assert assembled == pytest.approx(expected)
    # with only kappa_1 = 1 present the forcing is the constant term alone
    assert nonlinear_term(2, {(1,): 1.0}, N)[0] == pytest.approx(1.0)


def test_length_deficit_of_every_term(monkeypatch):
    # each cumulant product loses at least as much chaos as the Wick part carries
    seen = []
    original = hierarchy.coloring_bound_holds

    def recording(ground, coloring, J, partition):
        seen.append((dict(coloring), set(J), [list(b) for b in partition]))
        return original(ground, coloring, J, partition)

    monkeypatch.setattr(hierarchy, "coloring_bound_holds", recording)
    for n in range(2, 5):
        for s in enumerate_classifiers(n):
            hierarchy._row_terms(s)
    assert seen
    for coloring, J, blocks in seen:
        wick_colors = {coloring[x] for x in coloring if x not in J}
        shared = wick_colors & {coloring[x] for x in J}
        deficit = sum(len({coloring[x] for x in b}) - 1 for b in blocks)
        assert deficit >= len(wick_colors) - len(shared)


# ---- integration ---------------------------------------------------------------


def test_stationary_state_is_fixed_point():
    N = 16
    state = stationary_state(4, N)
    traj = integrate_hierarchy(state, HierarchyParams(N, 4), times=np.linspace(0, 10, 11))
    assert np.max(np.abs(traj.values - traj.values[0])) <= 1e-8


def dirac_state(N, n_star):
    return CumulantState.from_table(dirac_cumulants([N] + [0] * (N - 1), n_star), n_star)


def test_order_one_constant_and_n2_closed_form():
    N = 32
    times = np.linspace(0, 8, 17)
    initial = dirac_state(N, 3)
    traj = integrate_hierarchy(initial, HierarchyParams(N, 3), times=times)
    assert np.all(traj.series((1,)) == 1.0)
    x0, bar, D = initial[(1, 1)], -2 / (N + 2), dissipation_coeff(2, N)
    assert traj.series((1, 1)) == pytest.approx(np.exp(-D * times) * (x0 - bar) + bar, abs=1e-8)


@pytest.mark.parametrize("N", [8, 16, 32, 64])
def test_stationary_order2_variance(N):
    state = stationary_state(2, N)
    assert state[(2,)] == pytest.approx((2 * N - 2) / (N + 2), rel=1e-10)


@pytest.mark.parametrize("N", [8, 32])
def test_stationary_state_matches_oracle(N):
    state = stationary_state(5, N)
    for n in range(1, 6):
        for r in enumerate_classifiers(n):
            assert state[r] == pytest.approx(dirichlet_cumulant(N, r), rel=1e-10)


def test_dirichlet_oracles_agree():
    for N in (5, 12, 40):
        for r in [(1,), (2,), (1, 1), (3, 1), (2, 2, 1), (4,)]:
            assert float(sphere_moment(N, r)) == pytest.approx(dirichlet_moment(N, r), rel=1e-12)


def test_stationary_repeated_residual():
    N = 24
    state = stationary_state(4, N)
    for n in (2, 3, 4):
        op = build_linear_operator(n, N)
        x = np.array([state[r] for r in op.classifiers])
        res = op.full @ x + nonlinear_term(n, state, N) + op.source * state[nonrepeated(n)]
        assert np.max(np.abs(res)) <= 1e-10


def test_convergence_to_stationarity():
    N = 24
    traj = integrate_hierarchy(dirac_state(N, 3), HierarchyParams(N, 3), times=[0.0, 60.0])
    target = stationary_state(3, N)
    final = traj.state(1)
    for r in traj.classifiers:
        assert final[r] == pytest.approx(target[r], rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("N", [16, 64])
def test_conservation_identity(N):
    traj = integrate_hierarchy(dirac_state(N, 4), HierarchyParams(N, 4), times=np.linspace(0, 5, 11))
    for n in range(2, 5):
        lhs = traj.series((2,) + (1,) * (n - 2)) + (N - (n - 1)) / (n - 1) * traj.series((1,) * n)
        assert np.max(np.abs(lhs)) <= 1e-9


def test_integrate_rejects_bad_input():
    state = stationary_state(2, 8)
    with pytest.raises(DomainError):
        integrate_hierarchy(state, HierarchyParams(8, 2), t_end=1.0, dt=0.0)
    bad = CumulantState({1: {Classifier((1,)): 1.5}, 2: dict(state.values[2])})
    with pytest.raises(DomainError):
        integrate_hierarchy(bad, HierarchyParams(8, 2), t_end=1.0)
    with pytest.raises(DomainError):
        HierarchyParams(8, 5)


def test_trajectory_csv_deterministic():
    state = dirac_state(10, 2)
    a = integrate_hierarchy(state, HierarchyParams(10, 2), t_end=1.0).to_csv()
    b = integrate_hierarchy(state, HierarchyParams(10, 2), t_end=1.0).to_csv()
    assert a == b and a.startswith("t,order,classifier,value")


# ---- norms -------------------------------------------------------------------


def test_alpha_norm_order2():
    for alpha in (0.1, 0.5, 0.9):
        assert alpha_norm({(2,): -3.0}, alpha, 2, 40).norm == 3.0


def test_alpha_norm_alpha_zero_is_sup():
    rng = np.random.default_rng(2)
    vec = rng.normal(size=len(repeated_classifiers(5)))
    assert alpha_norm(vec, 0.0, 5, 30).norm == pytest.approx(np.abs(vec).max())


def test_alpha_norm_monotone_and_homogeneous():
    rng = np.random.default_rng(5)
    for _ in range(20):
        vec = rng.normal(size=len(repeated_classifiers(5)))
        norms = [alpha_norm(vec, a, 5, 30).norm for a in np.linspace(0, 1, 11)]
        assert all(x <= y + 1e-15 for x, y in zip(norms, norms[1:]))
        assert alpha_norm(-2.5 * vec, 0.5, 5, 30).norm == pytest.approx(2.5 * norms[5])


def test_alpha_norm_missing_values():
    with pytest.raises(IncompleteInputError):
        alpha_norm({(3,): 1.0}, 0.5, 3, 10)


def test_semigroup_curve_n2_exact():
    times = np.linspace(0, 10, 21)
    curve = semigroup_norm_curve(build_linear_operator(2, 100), 0.5, times)
    assert curve == pytest.approx(np.exp(-times / 2), rel=1e-12)


def test_semigroup_curve_starts_at_identity():
    for n in (3, 4):
        assert semigroup_norm_curve(build_linear_operator(n, 100), 0.5, [0.0])[0] >= 1.0


def test_semigroup_bound_beyond_threshold():
    # N_0 is astronomically large; past it the bound must hold, and it already holds at N = 10^4
    n_star, alpha = 3, 0.5
    N0 = semigroup_threshold(n_star, alpha)
    assert 80 * n_star * 5**n_star / N0**alpha <= 9
    assert 80 * n_star * 5**n_star / (N0 - 1) ** alpha > 9
    times = np.linspace(0, 40, 81)
    for N in (N0, 10_000):
        for n in range(2, n_star + 1):
            curve = semigroup_norm_curve(build_linear_operator(n, N), alpha, times)
            assert np.all(curve <= 10 * np.exp(-times / 2))


# ---- decay fits ---------------------------------------------------------------


def test_decay_fit_single_exponential():
    t = np.linspace(0, 30, 301)
    assert decay_rate_fit(t, np.exp(-0.5 * t) + 0.3, floor=0.3) == pytest.approx(0.5, abs=1e-3)


def test_decay_fit_returns_slow_rate():
    t = np.linspace(0, 30, 301)
    assert decay_rate_fit(t, 5 * np.exp(-2.0 * t) + np.exp(-0.5 * t)) == pytest.approx(0.5, abs=1e-3)


def test_decay_fit_constant_series():
    t = np.linspace(0, 10, 50)
    with pytest.raises(InsufficientSignalError):
        decay_rate_fit(t, np.full_like(t, 2.0), floor=2.0)
