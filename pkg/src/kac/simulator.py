"""Monte Carlo simulation of the Kac process and ensemble cumulant estimation.

The jump process has total rate N; each event picks an ordered pair of distinct
particles uniformly and rotates their velocities by an angle uniform on
(-pi, pi].  Ensembles are stored as arrays of shape (replicas, N).
"""

from __future__ import annotations

import csv
import json
import logging
import struct
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from math import pi, prod
from pathlib import Path
from typing import Any, BinaryIO

import numpy as np

from .errors import DegenerateDensityError, DomainError, SamplingError
from .partitions import (
    Classifier,
    CumulantTable,
    canonical_label_sequence,
    classifier_of,
    enumerate_classifiers,
    enumerate_set_partitions,
    mobius_weight,
    moments_to_cumulants,
)

log = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"KACS"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIQdQ")
SPHERE_RTOL = 1e-9
DEFAULT_BLOCK = 8192


@dataclass(frozen=True)
class SeededRng:
    """Root seed plus stream id; identical pairs give identical random streams."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.Philox(seq))

    def substream(self, k: int) -> "SeededRng":
        return SeededRng(self.seed, self.stream * 1_000_003 + k + 1)


def _gen(rng: SeededRng | np.random.Generator | int | None) -> np.random.Generator:
    if isinstance(rng, SeededRng):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return SeededRng(0 if rng is None else int(rng)).generator()


@dataclass
class ParticleState:
    velocities: np.ndarray

    @property
    def N(self) -> int:
        return int(self.velocities.shape[-1])

    @property
    def energies(self) -> np.ndarray:
        return self.velocities**2


@dataclass(frozen=True)
class CollisionEvent:
    i: int
    j: int
    theta: float

    def __post_init__(self) -> None:
        if self.i == self.j:
            raise DomainError("collision partners must be distinct")
        if not -pi < self.theta <= pi:
            raise DomainError(f"angle {self.theta} outside (-pi, pi]")


# ---------------------------------------------------------------------------
# initial data


def sample_uniform_sphere(N: int, rng, size: int | None = None) -> np.ndarray:
    """Uniform samples on the sphere of radius sqrt(N): normalized Gaussian vectors."""
    if N < 2:
        raise DomainError(f"N must be at least 2, got {N}")
    g = _gen(rng)
    shape = (N,) if size is None else (size, N)
    v = g.standard_normal(shape)
    return v * np.sqrt(N / np.sum(v**2, axis=-1, keepdims=True))


def sample_symmetrized_dirac(base: Sequence[float], rng, size: int | None = None) -> np.ndarray:
    """Uniformly random permutations of a fixed on-sphere velocity vector."""
    base = np.asarray(base, dtype=float)
    N = base.size
    if abs(base @ base - N) > SPHERE_RTOL * N:
        raise DomainError(f"base vector has squared norm {base @ base}, expected {N}")
    g = _gen(rng)
    if size is None:
        return base[g.permutation(N)]
    return base[np.argsort(g.random((size, N)), axis=1)]


def dirac_base_from_energies(energies: Sequence[float]) -> np.ndarray:
    e = np.asarray(energies, dtype=float)
    return np.sqrt(e * (e.size / e.sum()))


@dataclass
class ConditionedSample:
    samples: np.ndarray
    acceptance_rate: float


def sample_conditioned_product(
    density: Callable[[np.ndarray], np.ndarray],
    N: int,
    rng,
    burn_in: int = 2000,
    thinning: int = 50,
    n_chains: int = 1000,
    samples_per_chain: int = 1,
    proposal_scale: float = 0.5,
) -> ConditionedSample:
    """Metropolis sampling of the sphere law with density proportional to prod_i g(v_i).

    Proposals rotate a random pair by a Normal(0, proposal_scale^2) angle, so the
    chain never leaves the sphere and the proposal is symmetric.
    """
    g = _gen(rng)
    v = sample_uniform_sphere(N, g, n_chains)
    rows = np.arange(n_chains)
    accepted = 0
    proposed = 0

    def sweep(steps: int) -> int:
        acc = 0
        for _ in range(steps):
            i = g.integers(N, size=n_chains)
            j = (i + 1 + g.integers(N - 1, size=n_chains)) % N
            th = g.normal(0.0, proposal_scale, size=n_chains)
            c, s = np.cos(th), np.sin(th)
            vi, vj = v[rows, i], v[rows, j]
            ni, nj = c * vi + s * vj, -s * vi + c * vj
            cur = density(vi) * density(vj)
            new = density(ni) * density(nj)
            ok = (new > 0) & (g.random(n_chains) * cur < new)
            v[rows[ok], i[ok]] = ni[ok]
            v[rows[ok], j[ok]] = nj[ok]
            acc += int(ok.sum())
        return acc

    accepted += sweep(burn_in)
    proposed += burn_in * n_chains
    if burn_in and accepted == 0:
        raise DegenerateDensityError("no proposal accepted during burn-in")
    out = []
    for _ in range(samples_per_chain):
        accepted += sweep(thinning)
        proposed += thinning * n_chains
        out.append(v.copy())
    return ConditionedSample(np.concatenate(out, axis=0), accepted / max(proposed, 1))


# ---------------------------------------------------------------------------
# dynamics


def collision_step(state: ParticleState | np.ndarray, event: CollisionEvent) -> ParticleState:
    v = np.array(state.velocities if isinstance(state, ParticleState) else state, dtype=float)
    c, s = np.cos(event.theta), np.sin(event.theta)
    vi, vj = v[..., event.i].copy(), v[..., event.j].copy()
    v[..., event.i] = c * vi + s * vj
    v[..., event.j] = -s * vi + c * vj
    return ParticleState(v)


@dataclass
class Trajectory:
    times: np.ndarray
    snapshots: list[np.ndarray] | None
    event_counts: np.ndarray
    renormalizations: int
    max_energy_drift: float


def _advance(v: np.ndarray, gap: float, g: np.random.Generator, events: np.ndarray) -> None:
    B, N = v.shape
    counts = g.poisson(N * gap, size=B)
    events += counts
    for k in range(int(counts.max(initial=0))):
        act = np.flatnonzero(counts > k)
        i = g.integers(N, size=act.size)
        j = (i + 1 + g.integers(N - 1, size=act.size)) % N
        th = pi - g.uniform(0.0, 2 * pi, size=act.size)
        c, s = np.cos(th), np.sin(th)
        vi, vj = v[act, i], v[act, j]
        v[act, i] = c * vi + s * vj
        v[act, j] = -s * vi + c * vj


def simulate(
    initial: np.ndarray | ParticleState,
    times: Sequence[float],
    rng: SeededRng | np.random.Generator | int,
    block_size: int = DEFAULT_BLOCK,
    on_snapshot: Callable[[float, np.ndarray], Any] | None = None,
) -> Trajectory:
    """Evolve an ensemble and report it at the requested times.

    ``initial`` has shape (replicas, N) or (N,).  With a :class:`SeededRng`,
    each block of ``block_size`` replicas draws from its own substream, so a
    replica's path does not depend on how many replicas are run after it.
    Snapshots are passed to ``on_snapshot`` when given, otherwise stored.
    """
    v0 = initial.velocities if isinstance(initial, ParticleState) else initial
    v = np.array(v0, dtype=float, ndmin=2)
    R, N = v.shape
    times = np.asarray(times, dtype=float)
    if times.size == 0 or times[0] < 0 or np.any(np.diff(times) < 0):
        raise DomainError("times must be nonnegative and nondecreasing")
    if isinstance(rng, SeededRng):
        gens = [rng.substream(b).generator() for b in range(0, (R + block_size - 1) // block_size)]
    else:
        gens = [_gen(rng)]
        block_size = R
    events = np.zeros(R, dtype=np.int64)
    renorm = 0
    drift = 0.0
    stored: list[np.ndarray] | None = None if on_snapshot else []
    t_prev = 0.0
    for t in times:
        gap = t - t_prev
        for b, g in enumerate(gens):
            sl = slice(b * block_size, min((b + 1) * block_size, R))
            if gap > 0:
                blk = v[sl]
                _advance(blk, gap, g, events[sl])
                v[sl] = blk
        energy = np.sum(v**2, axis=1)
        rel = np.abs(energy - N) / N
        drift = max(drift, float(rel.max()))
        bad = rel > SPHERE_RTOL
        if bad.any():
            renorm += int(bad.sum())
            v[bad] *= np.sqrt(N / energy[bad])[:, None]
            log.info("renormalized %d replicas at t=%g", int(bad.sum()), t)
        if on_snapshot:
            on_snapshot(float(t), v)
        else:
            stored.append(v.copy())
        t_prev = t
    return Trajectory(times, stored, events, renorm, drift)


# ---------------------------------------------------------------------------
# estimation


def _falling(N: int, k: int) -> int:
    return prod(range(N - k + 1, N + 1))


def distinct_tuple_average(power_sums: dict[int, Any], r: Sequence[int], N: int) -> Any:
    """Average of prod_l x_{i_l}^{r_l} over ordered tuples of distinct indices.

    Uses inclusion-exclusion over set partitions of the tuple positions, with
    ``power_sums[k]`` = sum_i x_i^k (scalars or arrays).
    """
    r = list(r)
    L = len(r)
    if L > N:
        raise DomainError(f"classifier length {L} exceeds N={N}")
    total: Any = 0
    for p in enumerate_set_partitions(L):
        term: Any = 1
        for block in p:
            term = term * power_sums[sum(r[x] for x in block)] * mobius_weight(len(block))
        total = total + term
    return total / _falling(N, L)


@dataclass
class EnsembleEstimate:
    moments: dict[Classifier, float]
    moment_stderr: dict[Classifier, float]
    cumulants: dict[Classifier, float]
    stderr: dict[Classifier, float]
    n_replicas: int
    n_tuples: int | None = None
    meta: dict = field(default_factory=dict)

    def to_records(self) -> list[dict]:
        return [
            {
                "classifier": list(r),
                "order": r.order,
                "moment": self.moments[r],
                "cumulant": self.cumulants[r],
                "stderr": self.stderr[r],
                "n_replicas": self.n_replicas,
            }
            for r in self.cumulants
        ]

    def to_json(self) -> str:
        return json.dumps(self.to_records(), indent=2)


def _cumulant_from_moments(moments: dict[Classifier, Any], r: Classifier) -> Any:
    return moments_to_cumulants(lambda labels: moments[classifier_of(labels, labels=True)], canonical_label_sequence(r))


def estimate_cumulants(
    snapshots: np.ndarray,
    n_max: int,
    tuples_per_classifier: int | None = None,
    rng=None,
) -> EnsembleEstimate:
    """Moments and cumulants of every classifier up to ``n_max`` with jackknife errors.

    Each replica contributes the average of the monomial over distinct label
    tuples: all of them (exact U-statistic, the default) or
    ``tuples_per_classifier`` random ones.  Standard errors come from the
    leave-one-replica-out jackknife.
    """
    v = np.asarray(snapshots, dtype=float)
    R, N = v.shape
    if R < 100:
        raise DomainError(f"need at least 100 replicas, got {R}")
    if not 1 <= n_max <= 6:
        raise DomainError(f"n_max must lie in 1..6, got {n_max}")
    e = v**2
    classes = [r for n in range(1, n_max + 1) for r in enumerate_classifiers(n)]
    per_replica: dict[Classifier, np.ndarray] = {}
    if tuples_per_classifier is None:
        p = {k: np.sum(e**k, axis=1) for k in range(1, n_max + 1)}
        for r in classes:
            per_replica[r] = distinct_tuple_average(p, r, N)
    else:
        g = _gen(rng)
        for r in classes:
            available = _falling(N, len(r))
            if tuples_per_classifier > available:
                raise SamplingError(f"{tuples_per_classifier} tuples requested but only {available} exist for {list(r)}")
            idx = np.array([g.choice(N, size=len(r), replace=False) for _ in range(tuples_per_classifier)])
            mono = np.ones((R, tuples_per_classifier))
            for pos, power in enumerate(r):
                mono *= e[:, idx[:, pos]] ** power
            per_replica[r] = mono.mean(axis=1)
    means = {r: float(x.mean()) for r, x in per_replica.items()}
    moment_se = {r: float(x.std(ddof=1) / np.sqrt(R)) for r, x in per_replica.items()}
    loo = {r: (R * x.mean() - x) / (R - 1) for r, x in per_replica.items()}
    cumulants: dict[Classifier, float] = {}
    stderr: dict[Classifier, float] = {}
    for r in classes:
        cumulants[r] = float(_cumulant_from_moments(means, r))
        jack = np.asarray(_cumulant_from_moments(loo, r), dtype=float)
        stderr[r] = float(np.sqrt((R - 1) / R * np.sum((jack - jack.mean()) ** 2)))
    return EnsembleEstimate(means, moment_se, cumulants, stderr, R, tuples_per_classifier)


# ---------------------------------------------------------------------------
# exact ensemble cumulants


def _double_factorial(k: int) -> int:
    return prod(range(k, 0, -2)) if k > 0 else 1


def sphere_moment(N: int, r: Sequence[int]) -> Fraction:
    """E[prod_l e_l^{r_l}] under the uniform law on the sphere of radius sqrt(N).

    The normalized energies e_i/N are Dirichlet(1/2, ..., 1/2) distributed.
    """
    K = sum(r)
    num = Fraction(N) ** K
    for k in r:
        num *= Fraction(_double_factorial(2 * k - 1), 2**k)
    den = Fraction(1)
    for m in range(K):
        den *= Fraction(N, 2) + m
    return num / den


def _table(moment: Callable[[Classifier], Any], n_max: int) -> CumulantTable:
    classes = [r for n in range(1, n_max + 1) for r in enumerate_classifiers(n)]
    moments = {r: moment(r) for r in classes}
    return CumulantTable({r: _cumulant_from_moments(moments, r) for r in classes})


def sphere_cumulants(N: int, n_max: int) -> CumulantTable:
    """Exact stationary cumulants of all classifiers up to ``n_max``."""
    return _table(lambda r: sphere_moment(N, r), n_max)


def dirac_moment(energies: Sequence, r: Sequence[int]) -> Any:
    """E[prod_l e_l^{r_l}] for uniformly permuted fixed energies (exact for integer/Fraction input)."""
    energies = list(energies)
    N = len(energies)
    p = {k: sum(Fraction(x) ** k if isinstance(x, (int, Fraction)) else x**k for x in energies) for k in range(1, sum(r) + 1)}
    return distinct_tuple_average(p, r, N)


def dirac_cumulants(energies: Sequence, n_max: int) -> CumulantTable:
    """Exact cumulants of a symmetrized Dirac measure built from the given energies."""
    return _table(lambda r: dirac_moment(energies, r), n_max)


# ---------------------------------------------------------------------------
# snapshot export


def write_snapshot(fh: BinaryIO | str | Path, velocities: np.ndarray, time: float, replica: int) -> None:
    v = np.asarray(velocities, dtype="<f8").ravel()
    header = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, v.size, float(time), int(replica))
    if isinstance(fh, (str, Path)):
        with open(fh, "wb") as f:
            f.write(header + v.tobytes())
    else:
        fh.write(header + v.tobytes())


def read_snapshot(fh: BinaryIO | str | Path) -> tuple[dict, np.ndarray]:
    if isinstance(fh, (str, Path)):
        with open(fh, "rb") as f:
            return read_snapshot(f)
    raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise EOFError("truncated snapshot header")
    magic, version, N, time, replica = _HEADER.unpack(raw)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"bad snapshot magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    data = fh.read(8 * N)
    if len(data) < 8 * N:
        raise EOFError("truncated snapshot body")
    return {"N": N, "time": time, "replica": replica, "version": version}, np.frombuffer(data, dtype="<f8").copy()


def write_snapshots_csv(path: str | Path, snapshots: np.ndarray, time: float) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["replica", "time", "index", "velocity"])
        for rep, row in enumerate(np.atleast_2d(snapshots)):
            for i, x in enumerate(row):
                w.writerow([rep, repr(float(time)), i, repr(float(x))])
