"""Command-line experiment runner.

    kac simulate|hierarchy|stationary|kinetic|compare|norms [--config file.toml] [flags]
    kac verify fast|full

Settings come from an optional TOML file; command-line flags override it.
Data files are deterministic for a given configuration; timings and other
run metadata go to ``manifest.toml`` in the output directory.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np
import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .errors import DivergenceError, KacError
from .hierarchy import (
    CumulantState,
    HierarchyParams,
    alpha_norm,
    build_linear_operator,
    integrate_hierarchy,
    semigroup_norm_curve,
    stationary_state,
)
from .kinetic import accuracy_experiment
from .partitions import enumerate_classifiers, repeated_classifiers
from .simulator import (
    SeededRng,
    dirac_base_from_energies,
    dirac_cumulants,
    estimate_cumulants,
    sample_conditioned_product,
    sample_symmetrized_dirac,
    sample_uniform_sphere,
    simulate,
    sphere_cumulants,
)

log = logging.getLogger("kac")

EXIT_OK, EXIT_USAGE, EXIT_DIVERGENCE, EXIT_INVARIANT = 0, 2, 3, 4
MODES = ("simulate", "hierarchy", "stationary", "kinetic", "compare", "norms")

DENSITIES = {
    "flat": lambda v: np.ones_like(v),
    "gauss": lambda v: np.exp(-0.5 * v**2),
    "bimodal": lambda v: np.exp(-2.0 * (np.abs(v) - 1.2) ** 2),
}


class UsageError(Exception):
    pass


@dataclass
class ExperimentConfig:
    mode: str
    N: int
    n_star: int = 3
    alpha: float = 0.5
    c: float = 0.0
    t_end: float = 5.0
    dt: float = 1e-3
    seed: int = 0
    replicas: int = 10_000
    initial: str = "uniform"
    n_times: int = 6
    out: str = "kac-out"
    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.mode not in MODES:
            raise UsageError(f"unknown mode {self.mode!r}")
        if self.N < 2:
            raise UsageError(f"N must be at least 2, got {self.N}")
        if not 1 <= self.n_star <= min(self.N, 8):
            raise UsageError(f"n_star must lie in 1..{min(self.N, 8)}, got {self.n_star}")
        if self.mode not in ("stationary", "simulate") and 2 * self.n_star > self.N:
            raise UsageError(f"n_star={self.n_star} exceeds N/2 for N={self.N}")
        if self.mode == "simulate" and self.n_star > 6:
            raise UsageError("simulate estimates orders up to 6")
        if not 0 < self.alpha < 1:
            raise UsageError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.c < 0 or self.t_end < 0 or self.dt <= 0:
            raise UsageError("c and t_end must be nonnegative and dt positive")
        if self.replicas < 100 and self.mode in ("simulate", "compare"):
            raise UsageError("at least 100 replicas are required")
        if self.n_times < 2:
            raise UsageError("n_times must be at least 2")
        kind = self.initial.split(":", 1)[0]
        if kind not in ("uniform", "dirac", "conditioned"):
            raise UsageError(f"unknown initial data {self.initial!r}")
        if kind == "conditioned":
            if self.initial.split(":", 1)[1:] and self.initial.split(":", 1)[1] not in DENSITIES:
                raise UsageError(f"unknown density in {self.initial!r}; choose from {sorted(DENSITIES)}")
            if self.mode not in ("simulate",):
                raise UsageError("conditioned initial data has no exact cumulants; use it with simulate")
        if kind == "dirac":
            self.dirac_energies()

    def dirac_energies(self) -> list:
        choice = self.initial.split(":", 1)[1] if ":" in self.initial else "point"
        if choice == "point":
            return [self.N] + [0] * (self.N - 1)
        if choice == "linear":
            return [Fraction(2 * i, self.N - 1) for i in range(self.N)]
        if choice == "flat":
            return [1] * self.N
        try:
            values = [Fraction(x) for x in choice.split(",")]
        except ValueError:
            raise UsageError(f"cannot parse energies in {self.initial!r}") from None
        if len(values) != self.N or any(v < 0 for v in values) or sum(values) == 0:
            raise UsageError(f"dirac energies must be {self.N} nonnegative numbers with positive sum")
        total = sum(values)
        return [v * self.N / total for v in values]

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("out")
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.canonical(), sort_keys=True).encode()).hexdigest()


def load_config(mode: str, args: argparse.Namespace) -> ExperimentConfig:
    data: dict[str, Any] = {}
    if args.config:
        path = Path(args.config)
        try:
            text = path.read_text()
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        if not text.strip():
            raise UsageError(f"config file {path} is empty")
        try:
            raw = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise UsageError(f"invalid TOML in {path}: {exc}") from None
        if "config" in raw:
            # a run manifest is itself a valid config via its [config] table
            data.update(raw["config"])
        else:
            data.update({k: v for k, v in raw.items() if not isinstance(v, dict)})
            data.update(raw.get("params", {}))
    data = {k.replace("-", "_"): v for k, v in data.items()}
    for key in ("N", "n_star", "alpha", "c", "t_end", "dt", "seed", "replicas", "initial", "n_times", "out"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    data.pop("mode", None)
    data.pop("extra", None)
    if "N" not in data:
        raise UsageError("N is required (set it in the config or pass --N)")
    known = set(ExperimentConfig.__dataclass_fields__) - {"mode", "extra"}
    unknown = set(data) - known
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    try:
        cfg = ExperimentConfig(mode=mode, **data)
        for name, typ in (("N", int), ("n_star", int), ("seed", int), ("replicas", int), ("n_times", int)):
            setattr(cfg, name, typ(getattr(cfg, name)))
        for name in ("alpha", "c", "t_end", "dt"):
            setattr(cfg, name, float(getattr(cfg, name)))
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# pipelines


def _times(cfg: ExperimentConfig) -> np.ndarray:
    return np.linspace(0.0, cfg.t_end, cfg.n_times)


def _initial_ensemble(cfg: ExperimentConfig, rng: SeededRng) -> np.ndarray:
    kind = cfg.initial.split(":", 1)[0]
    if kind == "uniform":
        return sample_uniform_sphere(cfg.N, rng, cfg.replicas)
    if kind == "dirac":
        base = dirac_base_from_energies([float(e) for e in cfg.dirac_energies()])
        return sample_symmetrized_dirac(base, rng, cfg.replicas)
    name = cfg.initial.split(":", 1)[1] if ":" in cfg.initial else "flat"
    res = sample_conditioned_product(DENSITIES[name], cfg.N, rng, n_chains=cfg.replicas)
    log.info("conditioned sampler acceptance rate %.3f", res.acceptance_rate)
    return res.samples


def _initial_state(cfg: ExperimentConfig) -> CumulantState:
    if cfg.initial.startswith("dirac"):
        table = dirac_cumulants(cfg.dirac_energies(), cfg.n_star)
    else:
        table = sphere_cumulants(cfg.N, cfg.n_star)
    return CumulantState.from_table(table, cfg.n_star)


def _classifier_str(r) -> str:
    return "[" + ",".join(map(str, r)) + "]"


def _run_mc(cfg: ExperimentConfig, timings: dict) -> dict:
    t = time.perf_counter()
    v0 = _initial_ensemble(cfg, SeededRng(cfg.seed, 0))
    timings["initial_data"] = time.perf_counter() - t
    t = time.perf_counter()
    estimates = {}
    traj = simulate(v0, _times(cfg), SeededRng(cfg.seed, 1), on_snapshot=lambda tt, v: estimates.__setitem__(tt, estimate_cumulants(v, cfg.n_star)))
    timings["simulate"] = time.perf_counter() - t
    if traj.max_energy_drift > 1e-9:
        log.warning("energy drift %.3g exceeded tolerance before renormalization", traj.max_energy_drift)
    return {"estimates": estimates, "trajectory": traj}


def run_simulate(cfg: ExperimentConfig, out: Path, timings: dict) -> int:
    res = _run_mc(cfg, timings)
    with open(out / "estimates.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["t", "order", "classifier", "moment", "cumulant", "stderr", "n_replicas"])
        for t, est in res["estimates"].items():
            for r in est.cumulants:
                w.writerow([repr(t), r.order, _classifier_str(r), repr(est.moments[r]), repr(est.cumulants[r]), repr(est.stderr[r]), est.n_replicas])
    records = {repr(t): est.to_records() for t, est in res["estimates"].items()}
    (out / "estimates.json").write_text(json.dumps(records, indent=2))
    traj = res["trajectory"]
    return EXIT_OK if traj.max_energy_drift <= 1e-9 else EXIT_INVARIANT


def run_hierarchy(cfg: ExperimentConfig, out: Path, timings: dict) -> int:
    t = time.perf_counter()
    traj = integrate_hierarchy(_initial_state(cfg), HierarchyParams(cfg.N, cfg.n_star, cfg.alpha, cfg.c), times=_times(cfg), dt=cfg.dt)
    timings["integrate"] = time.perf_counter() - t
    (out / "trajectory.csv").write_text(traj.to_csv())
    residual = float(np.max(np.abs(traj.series((1,)) - 1.0)))
    return EXIT_OK if residual <= 1e-12 else EXIT_INVARIANT


def run_stationary(cfg: ExperimentConfig, out: Path, timings: dict) -> int:
    t = time.perf_counter()
    state = stationary_state(cfg.n_star, cfg.N)
    timings["solve"] = time.perf_counter() - t
    oracle = sphere_cumulants(cfg.N, cfg.n_star)
    rows = []
    for n in range(1, cfg.n_star + 1):
        for r in enumerate_classifiers(n):
            exact = float(oracle[r])
            rows.append({"order": n, "classifier": list(r), "hierarchy": state[r], "oracle": exact, "relative_error": abs(state[r] - exact) / abs(exact)})
    (out / "stationary.json").write_text(json.dumps(rows, indent=2))
    with open(out / "stationary.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["order", "classifier", "hierarchy", "oracle", "relative_error"])
        for row in rows:
            w.writerow([row["order"], _classifier_str(row["classifier"]), repr(row["hierarchy"]), repr(row["oracle"]), repr(row["relative_error"])])
    worst = max(row["relative_error"] for row in rows)
    print(json.dumps({"max_relative_error": worst}))
    return EXIT_OK if worst <= 1e-10 else EXIT_INVARIANT


def run_kinetic(cfg: ExperimentConfig, out: Path, timings: dict) -> int:
    params = HierarchyParams(cfg.N, cfg.n_star, cfg.alpha, cfg.c)
    t = time.perf_counter()
    report = accuracy_experiment(params, cfg.extra.get("t0"), cfg.t_end, initial=_initial_state(cfg), dt=cfg.dt)
    timings["accuracy"] = time.perf_counter() - t
    (out / "accuracy.json").write_text(report.to_json())
    (out / "accuracy.csv").write_text(report.to_csv())
    ok = report.delta[1].max(initial=0) == 0 and report.delta[1].min(initial=0) == 0
    ok &= all(report.delta[n][0] == 0 for n in report.delta)
    return EXIT_OK if ok else EXIT_INVARIANT


def run_compare(cfg: ExperimentConfig, out: Path, timings: dict) -> int:
    res = _run_mc(cfg, timings)
    t = time.perf_counter()
    times = _times(cfg)
    hier = integrate_hierarchy(_initial_state(cfg), HierarchyParams(cfg.N, cfg.n_star, cfg.alpha, cfg.c), times=times, dt=cfg.dt)
    timings["integrate"] = time.perf_counter() - t
    worst = 0.0
    with open(out / "residuals.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["t", "order", "classifier", "mc", "stderr", "hierarchy", "z"])
        for k, tt in enumerate(times):
            est = res["estimates"][float(tt)]
            for n in range(1, cfg.n_star + 1):
                for r in enumerate_classifiers(n):
                    ref = float(hier.series(r)[k])
                    z = abs(est.cumulants[r] - ref) / (est.stderr[r] + 1e-9 * max(1.0, abs(ref)) / 3)
                    worst = max(worst, z)
                    w.writerow([repr(float(tt)), n, _classifier_str(r), repr(est.cumulants[r]), repr(est.stderr[r]), repr(ref), repr(z)])
    print(json.dumps({"max_abs_z": worst}))
    return EXIT_OK if worst < 3.0 else EXIT_INVARIANT


def run_norms(cfg: ExperimentConfig, out: Path, timings: dict) -> int:
    t = time.perf_counter()
    times = _times(cfg)
    curves = {}
    for n in range(2, cfg.n_star + 1):
        curve = semigroup_norm_curve(build_linear_operator(n, cfg.N), cfg.alpha, times)
        curves[str(n)] = {"t": times.tolist(), "norm": curve.tolist(), "bound": (10 * np.exp(-times / 2)).tolist()}
    traj = integrate_hierarchy(_initial_state(cfg), HierarchyParams(cfg.N, cfg.n_star, cfg.alpha, cfg.c), times=times, dt=cfg.dt)
    along = {}
    for n in range(2, cfg.n_star + 1):
        rows = repeated_classifiers(n)
        along[str(n)] = [alpha_norm({r: traj.series(r)[k] for r in rows}, cfg.alpha, n, cfg.N).norm for k in range(times.size)]
    timings["norms"] = time.perf_counter() - t
    (out / "norms.json").write_text(json.dumps({"semigroup": curves, "trajectory_alpha_norm": {"t": times.tolist(), **along}}, indent=2))
    ok = all(max(np.array(c["norm"]) - np.array(c["bound"])) <= 0 for c in curves.values())
    return EXIT_OK if ok else EXIT_INVARIANT


PIPELINES = {
    "simulate": run_simulate,
    "hierarchy": run_hierarchy,
    "stationary": run_stationary,
    "kinetic": run_kinetic,
    "compare": run_compare,
    "norms": run_norms,
}


def run(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}
    started = time.time()
    t = time.perf_counter()
    status = PIPELINES[cfg.mode](cfg, out, timings)
    manifest = {
        "config_hash": cfg.digest(),
        "code_version": __version__,
        "config": {k: v for k, v in cfg.canonical().items() if k != "extra"},
        "seeds": {"root": cfg.seed, "initial_stream": 0, "dynamics_stream": 1},
        "wall_clock": {"started_unix": started, "elapsed_seconds": time.perf_counter() - t},
        "timings": timings,
        "exit_status": status,
    }
    (out / "manifest.toml").write_text(tomli_w.dumps(manifest))
    return status


def verify(suite: str, out: str | None = None) -> int:
    from .acceptance import SUITES, run_suite

    if suite not in SUITES:
        raise UsageError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}")
    results = run_suite(suite, report=lambda r: print(r.line(), file=sys.stderr))
    verdict = {
        "suite": suite,
        "passed": all(r.passed for r in results),
        "criteria": [
            {"number": r.number, "name": r.name, "passed": r.passed, "margin": r.margin, "seconds": r.seconds, "budget": r.budget}
            for r in results
        ],
    }
    text = json.dumps(verdict, indent=2)
    print(text)
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / f"verify-{suite}.json").write_text(text)
    return EXIT_OK if verdict["passed"] else EXIT_INVARIANT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kac", description="Kac-model cumulant hierarchy workbench")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for mode in MODES:
        p = sub.add_parser(mode)
        p.add_argument("--config")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--N", type=int)
        p.add_argument("--n-star", dest="n_star", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--c", type=float)
        p.add_argument("--t-end", dest="t_end", type=float)
        p.add_argument("--dt", type=float)
        p.add_argument("--replicas", type=int)
        p.add_argument("--initial", help="uniform | dirac:point|linear|flat|e1,e2,... | conditioned:flat|gauss|bimodal")
        p.add_argument("--n-times", dest="n_times", type=int, help="number of output times on [0, t_end]")
    v = sub.add_parser("verify")
    v.add_argument("suite")
    v.add_argument("--out")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "verify":
            return verify(args.suite, args.out)
        return run(load_config(args.command, args))
    except UsageError as exc:
        print(f"kac: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"kac: divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except KacError as exc:
        print(f"kac: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
