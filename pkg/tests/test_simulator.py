import io
from fractions import Fraction
from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kac.errors import DegenerateDensityError, DomainError, SamplingError
from kac.partitions import Classifier, enumerate_classifiers
from kac.simulator import (
    CollisionEvent,
    ParticleState,
    SeededRng,
    collision_step,
    dirac_base_from_energies,
    dirac_cumulants,
    distinct_tuple_average,
    estimate_cumulants,
    read_snapshot,
    sample_conditioned_product,
    sample_symmetrized_dirac,
    sample_uniform_sphere,
    simulate,
    sphere_cumulants,
    write_snapshot,
    write_snapshots_csv,
)


def within(est, r, exact, sigmas=3.0):
    return abs(est.cumulants[Classifier(r)] - exact) <= sigmas * est.stderr[Classifier(r)] + 1e-12


# ---- samplers ----------------------------------------------------------------


def test_uniform_sphere_norm():
    v = sample_uniform_sphere(20, SeededRng(1), 500)
    assert np.allclose(np.sum(v**2, axis=1), 20, rtol=1e-13)


def test_uniform_sphere_moments():
    N = 12
    v = sample_uniform_sphere(N, SeededRng(2), 100_000)
    est = estimate_cumulants(v, 2)
    m2 = est.moments[Classifier((2,))]
    assert abs(m2 - 3 * N / (N + 2)) <= 3 * est.moment_stderr[Classifier((2,))]
    assert within(est, (1, 1), -2 / (N + 2))


def test_uniform_sphere_reproduces_oracle_to_order3():
    N = 10
    est = estimate_cumulants(sample_uniform_sphere(N, SeededRng(3), 50_000), 3)
    exact = sphere_cumulants(N, 3)
    for n in range(1, 4):
        for r in enumerate_classifiers(n):
            assert within(est, r, float(exact[r]))


def test_dirac_point_covariance():
    N = 16
    base = dirac_base_from_energies([N] + [0] * (N - 1))
    est = estimate_cumulants(sample_symmetrized_dirac(base, SeededRng(4), 20_000), 2)
    assert within(est, (1, 1), -1.0)
    assert within(est, (2,), N - 1.0)
    exact = dirac_cumulants([N] + [0] * (N - 1), 2)
    assert exact[(1, 1)] == -1 and exact[(2,)] == N - 1


def test_dirac_constant_base_has_no_fluctuations():
    est = estimate_cumulants(sample_symmetrized_dirac(np.ones(8), SeededRng(5), 200), 4)
    for n in range(2, 5):
        for r in enumerate_classifiers(n):
            assert est.cumulants[r] == pytest.approx(0.0, abs=1e-12)


def test_dirac_rejects_off_sphere_base():
    with pytest.raises(DomainError):
        sample_symmetrized_dirac(np.ones(4) * 2, SeededRng(0))


@pytest.mark.parametrize("n", [2, 3])
def test_dirac_leading_order(n):
    # kappa[e_J] ~ (-1)^(k-1) (k-1)! N^(n-k) for k distinct labels
    N = 400
    exact = dirac_cumulants([N] + [0] * (N - 1), n)
    for r in enumerate_classifiers(n):
        k = len(r)
        lead = (-1) ** (k - 1) * factorial(k - 1) * N ** (n - k)
        assert abs(float(exact[r]) - lead) <= 4 * n**2 * N ** (n - k - 1)


def test_dirac_cumulants_exact_fractions():
    exact = dirac_cumulants([Fraction(3), Fraction(1), 0, 0], 3)
    assert all(isinstance(v, Fraction) for _, v in exact.items())


def gauss(v):
    return np.exp(-0.5 * v**2)


def bimodal(v):
    return np.exp(-2.0 * (np.abs(v) - 1.2) ** 2)


@pytest.mark.parametrize("density", [lambda v: np.ones_like(v), gauss])
def test_conditioned_sampler_radial_densities_are_uniform(density):
    N = 8
    res = sample_conditioned_product(density, N, SeededRng(6), burn_in=300, thinning=20, n_chains=4000)
    est = estimate_cumulants(res.samples, 2)
    assert np.allclose(np.sum(res.samples**2, axis=1), N)
    assert within(est, (1, 1), -2 / (N + 2))
    assert within(est, (2,), (2 * N - 2) / (N + 2))


def test_conditioned_sampler_bimodal_self_oracle():
    N = 6
    short = sample_conditioned_product(bimodal, N, SeededRng(7), burn_in=200, thinning=20, n_chains=4000)
    long = sample_conditioned_product(bimodal, N, SeededRng(8), burn_in=2000, thinning=200, n_chains=4000)
    assert 0 < short.acceptance_rate < 1
    a, b = short.samples[:, 0], long.samples[:, 0]
    for k in range(1, 5):
        diff = np.mean(a**k) - np.mean(b**k)
        se = np.sqrt(np.var(a**k) / a.size + np.var(b**k) / b.size)
        assert abs(diff) <= 3 * se


def test_conditioned_sampler_degenerate_density():
    with pytest.raises(DegenerateDensityError):
        sample_conditioned_product(np.zeros_like, 4, SeededRng(9), burn_in=10, n_chains=10)


# ---- collisions --------------------------------------------------------------


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), theta=st.floats(-np.pi, np.pi, exclude_min=True), i=st.integers(0, 5), d=st.integers(1, 5))
def test_collision_conserves_energy(seed, theta, i, d):
    v = sample_uniform_sphere(6, SeededRng(seed))
    j = (i + d) % 6
    out = collision_step(v, CollisionEvent(i, j, theta)).velocities
    assert np.sum(out**2) == pytest.approx(np.sum(v**2), rel=1e-12)
    assert out[i] ** 2 + out[j] ** 2 == pytest.approx(v[i] ** 2 + v[j] ** 2, rel=1e-12, abs=1e-12)
    others = [k for k in range(6) if k not in (i, j)]
    assert np.array_equal(out[others], v[others])


def test_collision_zero_angle_is_identity():
    v = sample_uniform_sphere(5, SeededRng(10))
    assert np.array_equal(collision_step(ParticleState(v), CollisionEvent(1, 3, 0.0)).velocities, v)


def test_collision_event_validation():
    with pytest.raises(DomainError):
        CollisionEvent(2, 2, 0.1)
    with pytest.raises(DomainError):
        CollisionEvent(0, 1, -np.pi)


# ---- dynamics ----------------------------------------------------------------


def test_simulate_deterministic():
    v0 = sample_uniform_sphere(10, SeededRng(11), 300)
    a = simulate(v0, [0.0, 1.0, 2.0], SeededRng(11, 1), block_size=64)
    b = simulate(v0, [0.0, 1.0, 2.0], SeededRng(11, 1), block_size=64)
    for x, y in zip(a.snapshots, b.snapshots):
        assert np.array_equal(x, y)
    assert np.array_equal(a.event_counts, b.event_counts)


def test_simulate_block_prefix_is_stable():
    v0 = sample_uniform_sphere(10, SeededRng(12), 256)
    full = simulate(v0, [1.5], SeededRng(12, 1), block_size=64)
    part = simulate(v0[:128], [1.5], SeededRng(12, 1), block_size=64)
    assert np.array_equal(full.snapshots[0][:128], part.snapshots[0])


def test_simulate_event_rate():
    N, t, R = 12, 3.0, 4000
    traj = simulate(sample_uniform_sphere(N, SeededRng(13), R), [t], SeededRng(13, 1))
    counts = traj.event_counts
    assert abs(counts.mean() - N * t) <= 4 * counts.std() / np.sqrt(R)


def test_simulate_time_zero_returns_initial():
    v0 = sample_uniform_sphere(8, SeededRng(14), 50)
    traj = simulate(v0, [0.0], SeededRng(14, 1))
    assert np.array_equal(traj.snapshots[0], v0)
    assert traj.event_counts.sum() == 0


def test_simulate_energy_conservation():
    traj = simulate(sample_uniform_sphere(16, SeededRng(15), 500), np.linspace(0, 5, 6), SeededRng(15, 1))
    assert traj.max_energy_drift <= 1e-9
    assert traj.renormalizations == 0
    for snap in traj.snapshots:
        assert np.allclose(np.sum(snap**2, axis=1), 16, rtol=1e-9)


def test_simulate_rejects_decreasing_times():
    with pytest.raises(DomainError):
        simulate(np.ones((1, 4)), [1.0, 0.5], SeededRng(0))


def test_long_run_reaches_stationary_covariance():
    N = 16
    base = dirac_base_from_energies([N] + [0] * (N - 1))
    v0 = sample_symmetrized_dirac(base, SeededRng(16), 20_000)
    traj = simulate(v0, [50.0], SeededRng(16, 1))
    est = estimate_cumulants(traj.snapshots[0], 2)
    assert within(est, (1, 1), -2 / (N + 2))


def test_stationarity_of_uniform_sphere():
    N = 10
    v0 = sample_uniform_sphere(N, SeededRng(17), 30_000)
    traj = simulate(v0, [0.0, 10.0], SeededRng(17, 1))
    a, b = (estimate_cumulants(s, 3) for s in traj.snapshots)
    for n in range(1, 4):
        for r in enumerate_classifiers(n):
            diff = a.cumulants[r] - b.cumulants[r]
            assert abs(diff) <= 3 * np.hypot(a.stderr[r], b.stderr[r]) + 1e-12


# ---- estimation ----------------------------------------------------------------


def test_distinct_tuple_average_brute_force():
    import itertools

    rng = np.random.default_rng(18)
    e = rng.exponential(size=6)
    p = {k: np.sum(e**k) for k in range(1, 6)}
    for r in [(1,), (2, 1), (1, 1, 1), (3, 1, 1), (2, 2)]:
        brute = np.mean([np.prod([e[i] ** k for i, k in zip(idx, r)]) for idx in itertools.permutations(range(6), len(r))])
        assert distinct_tuple_average(p, r, 6) == pytest.approx(brute, rel=1e-12)


def test_estimate_order_one():
    est = estimate_cumulants(sample_uniform_sphere(9, SeededRng(19), 1000), 1)
    assert est.cumulants[Classifier((1,))] == pytest.approx(1.0, abs=1e-12)


def test_estimate_requires_replicas_and_tuples():
    v = sample_uniform_sphere(4, SeededRng(20), 200)
    with pytest.raises(DomainError):
        estimate_cumulants(v[:50], 2)
    with pytest.raises(SamplingError):
        estimate_cumulants(v, 3, tuples_per_classifier=100, rng=SeededRng(20))


def test_sampled_tuples_agree_with_exhaustive():
    N = 12
    v = sample_uniform_sphere(N, SeededRng(21), 20_000)
    a = estimate_cumulants(v, 2)
    b = estimate_cumulants(v, 2, tuples_per_classifier=5, rng=SeededRng(21, 3))
    for r in enumerate_classifiers(2):
        assert abs(a.cumulants[r] - b.cumulants[r]) <= 3 * b.stderr[r]


def test_exchangeability_across_disjoint_tuples():
    # per-pair covariances from disjoint label pairs agree (chi-square at the 1% level)
    from scipy.stats import chi2

    N = 12
    e = sample_uniform_sphere(N, SeededRng(22), 40_000) ** 2
    pairs = [(0, 1), (2, 3), (4, 5), (6, 7), (8, 9), (10, 11)]
    vals, ses = [], []
    for i, j in pairs:
        x, y = e[:, i], e[:, j]
        prod = (x - 1) * (y - 1)
        vals.append(prod.mean())
        ses.append(prod.std(ddof=1) / np.sqrt(prod.size))
    vals, ses = np.array(vals), np.array(ses)
    mean = np.average(vals, weights=1 / ses**2)
    stat = np.sum(((vals - mean) / ses) ** 2)
    assert stat <= chi2.ppf(0.99, len(pairs) - 1)


def test_estimate_json_records():
    est = estimate_cumulants(sample_uniform_sphere(6, SeededRng(23), 200), 2)
    assert est.to_json() == estimate_cumulants(sample_uniform_sphere(6, SeededRng(23), 200), 2).to_json()
    assert {rec["order"] for rec in est.to_records()} == {1, 2}


# ---- snapshot io ---------------------------------------------------------------


def test_snapshot_round_trip(tmp_path):
    v = sample_uniform_sphere(7, SeededRng(24))
    buf = io.BytesIO()
    write_snapshot(buf, v, 1.25, 42)
    buf.seek(0)
    meta, back = read_snapshot(buf)
    assert np.array_equal(back, v)
    assert meta["time"] == 1.25 and meta["replica"] == 42
    path = tmp_path / "snap.bin"
    write_snapshot(path, v, 0.5, 1)
    assert np.array_equal(read_snapshot(path)[1], v)


def test_snapshot_bad_magic():
    with pytest.raises(Exception):
        read_snapshot(io.BytesIO(b"XXXX" + bytes(40)))


def test_snapshots_csv(tmp_path):
    v = sample_uniform_sphere(3, SeededRng(25), 4)
    write_snapshots_csv(tmp_path / "s.csv", v, 2.0)
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "replica,time,index,velocity"
    assert len(lines) == 1 + 4 * 3
    assert float(lines[1].split(",")[3]) == v[0, 0]
