"""Experiment orchestration: offline data, Monte Carlo sweeps, aggregation, plots."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from . import __version__
from .baselines import HOEFFDING, KL, artificial_replay_run, lucb_run
from .oracle import (
    BanditInstance,
    OfflineDataset,
    SolverConfig,
    allocation_from_normalized,
    check_optimality,
    solve_P2,
    solve_P3,
)
from .rewards import RewardSource
from .spef import family_from_name
from .tas import RESOLVE_BETA, BudgetExhausted, RunResult, run

log = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "OOBAI_OUTPUT_DIR"
TRIAL_COLUMNS = ["algorithm", "tau1", "trial", "seed", "stop_time", "recommended_arm", "correct", "wall_time_ms"]
AGGREGATE_COLUMNS = ["algorithm", "tau1", "trials", "failed", "mean_stop_time", "std_stop_time", "q10", "q50", "q90", "error_rate"]
STOPPING_ALGORITHMS = ("tas", "lucb-h", "lucb-kl", "replay", "tas-beta")
# order matters: the index feeds the independent seeding scheme
ALGORITHMS = ("tas", "lucb-h", "lucb-kl", "replay", "ucb-regret", "tas-beta")
POLICIES = ("uniform", "uniform_exclude_best", "custom_weights")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class OfflinePolicy:
    kind: str
    weights: tuple[float, ...] | None = None

    @classmethod
    def parse(cls, raw) -> OfflinePolicy:
        if isinstance(raw, str):
            kind = raw.lower().replace("-", "_")
            if kind not in ("uniform", "uniform_exclude_best"):
                raise ConfigError(f"unknown offline policy {raw!r}")
            return cls(kind)
        if isinstance(raw, dict) and set(raw) == {"custom_weights"}:
            w = tuple(float(x) for x in raw["custom_weights"])
            if any(x < 0 for x in w) or abs(sum(w) - 1.0) > 1e-9:
                raise ConfigError("custom_weights must lie on the simplex")
            return cls("custom_weights", w)
        raise ConfigError(f"cannot parse offline policy {raw!r}")

    def label(self) -> str:
        return self.kind


@dataclass
class ExperimentConfig:
    """One sweep: an instance, an offline policy and a grid of offline sizes.

    ``seeding`` selects how per-trial seeds are derived from ``master_seed``:
    ``common`` shares one seed across offline sizes and algorithms for a given
    trial (common random numbers, nested offline data); ``independent`` mixes
    algorithm and offline size into the seed so every cell has its own stream.
    """

    family: str
    means: tuple[float, ...]
    delta: float
    offline_policy: OfflinePolicy = field(default_factory=lambda: OfflinePolicy("uniform"))
    offline_sizes: tuple[int, ...] = (0,)
    trials: int = 1
    algorithms: tuple[str, ...] = ("tas",)
    master_seed: int = 0
    output_dir: str = "results"
    name: str = "sweep"
    seeding: str = "common"
    max_steps: int = 10_000_000
    horizons: tuple[int, ...] = (1000, 10_000, 100_000)
    timing: bool = True
    jobs: int = 1

    def __post_init__(self) -> None:
        self.means = tuple(float(m) for m in self.means)
        self.offline_sizes = tuple(int(s) for s in self.offline_sizes)
        self.algorithms = tuple(self.algorithms)
        self.horizons = tuple(int(h) for h in self.horizons)
        if not isinstance(self.offline_policy, OfflinePolicy):
            self.offline_policy = OfflinePolicy.parse(self.offline_policy)
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if any(s < 0 for s in self.offline_sizes):
            raise ConfigError("offline sizes must be nonnegative")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("delta must lie in (0, 1)")
        if self.seeding not in ("common", "independent"):
            raise ConfigError(f"unknown seeding scheme {self.seeding!r}")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {a!r}; choose from {ALGORITHMS}")
        w = self.offline_policy.weights
        if w is not None and len(w) != len(self.means):
            raise ConfigError("custom_weights needs one weight per arm")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")
        self.instance  # validates family and means

    @property
    def instance(self) -> BanditInstance:
        try:
            return BanditInstance(family_from_name(self.family), self.means)
        except ValueError as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | os.PathLike) -> ExperimentConfig:
        with open(path) as fh:
            data = yaml.safe_load(fh)
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a mapping at top level")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        pol = self.offline_policy
        d["offline_policy"] = pol.kind if pol.weights is None else {"custom_weights": list(pol.weights)}
        for k in ("means", "offline_sizes", "algorithms", "horizons"):
            d[k] = list(d[k])
        return d

    def resolved_output_dir(self) -> Path:
        return Path(os.environ.get(OUTPUT_DIR_ENV) or self.output_dir)


@dataclass
class TrialRecord:
    algorithm: str
    tau1: int
    trial: int
    seed: int
    stop_time: int | None
    recommended_arm: int | None
    correct: bool | None
    wall_time_ms: float

    @property
    def failed(self) -> bool:
        return self.stop_time is None

    def row(self) -> list:
        if self.failed:
            return [self.algorithm, self.tau1, self.trial, self.seed, "", "", "", f"{self.wall_time_ms:.3f}"]
        return [self.algorithm, self.tau1, self.trial, self.seed, self.stop_time, self.recommended_arm, int(self.correct), f"{self.wall_time_ms:.3f}"]


@dataclass
class AggregateStats:
    algorithm: str
    tau1: int
    trials: int
    failed: int
    mean_stop_time: float
    std_stop_time: float
    q10: float
    q50: float
    q90: float
    error_rate: float

    def row(self) -> list:
        vals = [self.mean_stop_time, self.std_stop_time, self.q10, self.q50, self.q90, self.error_rate]
        return [self.algorithm, self.tau1, self.trials, self.failed] + [repr(float(v)) for v in vals]


# -- seeding


def child_seed(master_seed: int, trial: int, algorithm: str | None = None, tau1: int | None = None) -> int:
    """64-bit trial seed mixed from the master seed by ``numpy.random.SeedSequence``.

    With ``algorithm``/``tau1`` left out the seed depends on the trial alone,
    so every algorithm and offline size sees the same reward streams.
    """
    key = [master_seed, trial]
    if algorithm is not None:
        key += [ALGORITHMS.index(algorithm) + 1, tau1]
    return int(np.random.SeedSequence(key).generate_state(1, np.uint64)[0])


# -- offline data


def policy_counts(policy: OfflinePolicy, tau1: int, instance: BanditInstance, seed: int | None = None) -> list[int]:
    K = instance.K
    if tau1 < 0:
        raise ValueError("tau1 must be nonnegative")
    if policy.kind == "uniform":
        arms = list(range(K))
    elif policy.kind == "uniform_exclude_best":
        if K < 2:
            raise ConfigError("uniform_exclude_best needs at least two arms")
        arms = [a for a in range(K) if a != instance.best_arm]
    else:
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2,)))
        return rng.multinomial(tau1, policy.weights).tolist()
    counts = [0] * K
    q, r = divmod(tau1, len(arms))
    for i, a in enumerate(arms):
        counts[a] = q + (1 if i < r else 0)
    return counts


def generate_offline(policy: OfflinePolicy, tau1: int, instance: BanditInstance, seed: int, source: RewardSource | None = None) -> tuple[OfflineDataset, list[np.ndarray]]:
    """Offline dataset plus the raw per-arm reward lists (for replay).

    Rewards come from the offline streams of ``source`` (built from ``seed``
    when omitted). Round-robin counts make datasets for growing ``tau1``
    prefix-extensions of one another.
    """
    if source is None:
        source = RewardSource(instance.family, instance.means, seed)
    counts = policy_counts(policy, tau1, instance, seed)
    raw = [source.offline.take(a, c) for a, c in enumerate(counts)]
    return OfflineDataset.from_rewards(raw), raw


# -- trials


def run_algorithm(algorithm: str, instance: BanditInstance, offline: OfflineDataset, raw: Sequence[np.ndarray], delta: float, source: RewardSource, max_steps: int) -> RunResult:
    if algorithm == "tas":
        return run(instance, offline, delta, rewards=source.online, max_steps=max_steps)
    if algorithm == "tas-beta":
        return run(instance, offline, delta, rewards=source.online, max_steps=max_steps, resolve=RESOLVE_BETA)
    if algorithm == "lucb-h":
        return lucb_run(instance, offline, delta, HOEFFDING, rewards=source.online, max_steps=max_steps)
    if algorithm == "lucb-kl":
        return lucb_run(instance, offline, delta, KL, rewards=source.online, max_steps=max_steps)
    if algorithm == "replay":
        return artificial_replay_run(instance, [r.tolist() for r in raw], delta, rewards=source.online, max_steps=max_steps)
    raise ConfigError(f"{algorithm!r} is not a stopping-time algorithm")


def _trial_seed(config: ExperimentConfig, algorithm: str, tau1: int, trial: int) -> int:
    if config.seeding == "common":
        return child_seed(config.master_seed, trial)
    return child_seed(config.master_seed, trial, algorithm, tau1)


def run_trial(config: ExperimentConfig, algorithm: str, tau1: int, trial: int) -> TrialRecord:
    instance = config.instance
    seed = _trial_seed(config, algorithm, tau1, trial)
    source = RewardSource(instance.family, instance.means, seed)
    offline, raw = generate_offline(config.offline_policy, tau1, instance, seed, source)
    start = time.perf_counter()
    try:
        res = run_algorithm(algorithm, instance, offline, raw, config.delta, source, config.max_steps)
        fields = (res.stop_time, res.recommended_arm, res.correct)
    except BudgetExhausted:
        log.warning("%s tau1=%d trial=%d hit the step cap", algorithm, tau1, trial)
        fields = (None, None, None)
    wall = (time.perf_counter() - start) * 1e3 if config.timing else 0.0
    return TrialRecord(algorithm, tau1, trial, seed, *fields, wall)


def _trial_job(args) -> TrialRecord:
    return run_trial(*args)


def aggregate(records: Sequence[TrialRecord]) -> list[AggregateStats]:
    """Per-(algorithm, tau1) statistics; independent of record order."""
    cells: dict[tuple[str, int], list[TrialRecord]] = {}
    for r in records:
        cells.setdefault((r.algorithm, r.tau1), []).append(r)
    out = []
    for (algo, tau1), rs in sorted(cells.items()):
        rs = sorted(rs, key=lambda r: r.trial)
        ok = [r for r in rs if not r.failed]
        st = np.array([r.stop_time for r in ok], dtype=float)
        if len(st):
            q10, q50, q90 = np.quantile(st, [0.1, 0.5, 0.9])
            mean, std = st.mean(), st.std(ddof=1) if len(st) > 1 else 0.0
            err = sum(not r.correct for r in ok) / len(ok)
        else:
            q10 = q50 = q90 = mean = std = err = math.nan
        out.append(AggregateStats(algo, tau1, len(rs), len(rs) - len(ok), mean, std, q10, q50, q90, err))
    return out


def error_rate_bound(delta: float, trials: int) -> float:
    return delta + 3.0 * math.sqrt(delta * (1.0 - delta) / trials)


@dataclass
class SweepResult:
    records: list[TrialRecord]
    aggregates: list[AggregateStats]
    files: dict[str, Path]


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_manifest(out: Path, config: ExperimentConfig, flags: dict | None = None, extra: dict | None = None) -> Path:
    manifest = {
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "config": config.to_dict(),
        "flags": flags or {},
        "output_dir_env": os.environ.get(OUTPUT_DIR_ENV),
        "started": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return path


def run_sweep(config: ExperimentConfig, flags: dict | None = None, plots: bool = True) -> SweepResult:
    """Run every (algorithm, tau1, trial) cell and write CSVs, manifest and plot."""
    algos = [a for a in config.algorithms if a in STOPPING_ALGORITHMS]
    skipped = [a for a in config.algorithms if a not in STOPPING_ALGORITHMS]
    if skipped:
        log.warning("sweep skips non-stopping algorithms %s", skipped)
    jobs = [(config, a, tau1, k) for a in algos for tau1 in config.offline_sizes for k in range(config.trials)]
    if config.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            records = list(pool.map(_trial_job, jobs, chunksize=max(1, len(jobs) // (4 * config.jobs))))
    else:
        records = [_trial_job(j) for j in jobs]
    aggs = aggregate(records)
    out = config.resolved_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "trials": out / f"{config.name}_trials.csv",
        "aggregate": out / f"{config.name}_aggregate.csv",
    }
    _write_csv(files["trials"], TRIAL_COLUMNS, [r.row() for r in records])
    _write_csv(files["aggregate"], AGGREGATE_COLUMNS, [a.row() for a in aggs])
    files["manifest"] = write_manifest(out, config, flags, {"outputs": {k: str(v) for k, v in files.items()}})
    if plots:
        files.update({f"plot_{i}": p for i, p in enumerate(emit_plots(aggs, out, title=config.name, policy=config.offline_policy.label()))})
    return SweepResult(records, aggs, files)


def read_trials(path: str | os.PathLike) -> list[TrialRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            failed = row["stop_time"] == ""
            out.append(TrialRecord(
                row["algorithm"], int(row["tau1"]), int(row["trial"]), int(row["seed"]),
                None if failed else int(row["stop_time"]),
                None if failed else int(row["recommended_arm"]),
                None if failed else row["correct"] == "1",
                float(row["wall_time_ms"]),
            ))
    return out


# -- plots


def emit_plots(aggregates: Sequence[AggregateStats], output_dir: str | os.PathLike, title: str = "sweep", policy: str = "") -> list[Path]:
    """Mean stop time against offline size, one series per algorithm, 10-90% band."""
    if not aggregates:
        log.warning("no aggregates to plot")
        return []
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "oobai"
    series: dict[str, list[AggregateStats]] = {}
    for a in aggregates:
        series.setdefault(a.algorithm, []).append(a)
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for algo, rows in series.items():
        rows = sorted(rows, key=lambda r: r.tau1)
        x = [r.tau1 for r in rows]
        ax.plot(x, [r.mean_stop_time for r in rows], marker="o", label=algo)
        ax.fill_between(x, [r.q10 for r in rows], [r.q90 for r in rows], alpha=0.2)
    ax.set_xlabel("offline samples")
    ax.set_ylabel("online samples until stopping")
    ax.set_title(f"{title} ({policy})" if policy else title)
    ax.legend()
    fig.tight_layout()
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{title}_stop_time.svg"
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return [path]


# -- verification battery


@dataclass
class Check:
    name: str
    passed: bool
    residual: float
    detail: str = ""


@dataclass
class VerificationReport:
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> list[str]:
        return [f"{'PASS' if c.passed else 'FAIL'}  {c.name:<40} residual={c.residual:.3e}  {c.detail}" for c in self.checks]


def verify(instance: BanditInstance, offline: OfflineDataset | Sequence[float], delta: float, tol: float = 1e-4) -> VerificationReport:
    """Optimality residuals, normalized round trip and boundary cases on one instance."""
    counts = np.asarray(offline.counts if isinstance(offline, OfflineDataset) else offline, dtype=float)
    cfg = SolverConfig.for_p2(delta)
    checks = []
    alloc = solve_P2(instance, counts, cfg)
    rep = check_optimality(instance, counts, alloc, cfg)
    checks.append(Check("optimality residuals", rep.max_constraint_violation <= tol, rep.max_constraint_violation, f"A1={rep.active_set_A1}"))

    tau1 = counts.sum()
    if tau1 > 0:
        sol = solve_P3(instance, counts / tau1, tau1, delta)
        if sol.z >= 1.0:
            err = float(alloc.sum()) / max(1.0, tau1)
            checks.append(Check("normalized round trip", err <= tol, err, "z*=1"))
        else:
            back = allocation_from_normalized(sol, tau1)
            scale = np.abs(alloc) + 1e-3 * alloc.sum()
            err = float(np.max(np.abs(back - alloc) / scale))
            checks.append(Check("normalized round trip", err <= 1e-3, err, f"z*={sol.z:.6g}"))

    star = solve_P2(instance, np.zeros(instance.K), cfg)
    over = solve_P2(instance, 1.5 * star, cfg)
    err = float(over.max()) / max(1.0, star.sum())
    checks.append(Check("offline covers optimum -> zero", err <= tol, err))
    half = solve_P2(instance, 0.5 * star, cfg)
    err = float(np.max(np.abs(half - 0.5 * star) / np.maximum(0.5 * star, 1e-12 + 1e-6 * star.sum())))
    checks.append(Check("offline below optimum -> difference", err <= 1e-3, err))
    best = instance.best_arm
    off = np.zeros(instance.K)
    off[best] = 2.0 * star[best]
    n1 = float(solve_P2(instance, off, cfg)[best])
    checks.append(Check("best arm over-covered -> zero", n1 == 0.0, n1))
    return VerificationReport(checks)
