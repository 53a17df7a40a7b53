"""Command-line entry point: ``python -m oobai {solve,run,sweep,verify}``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from .baselines import oo_ucb_regret_batch
from .harness import (
    ALGORITHMS,
    ConfigError,
    ExperimentConfig,
    TRIAL_COLUMNS,
    child_seed,
    generate_offline,
    policy_counts,
    run_algorithm,
    run_sweep,
    verify,
    write_manifest,
)
from .oracle import SolverConfig, check_optimality, solve_P1, solve_P2, solve_P3
from .rewards import RewardSource
from .tas import BudgetExhausted


def _parse_counts(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"bad counts {text!r}") from e


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    changes = {}
    if getattr(args, "delta", None) is not None:
        changes["delta"] = args.delta
    if getattr(args, "trials", None) is not None:
        changes["trials"] = args.trials
    if getattr(args, "jobs", None) is not None:
        changes["jobs"] = args.jobs
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _fmt(v) -> str:
    return np.array2string(np.asarray(v, dtype=float), precision=6, separator=", ")


def cmd_solve(args) -> int:
    cfg = _load(args)
    inst = cfg.instance
    counts = args.offline if args.offline is not None else [0.0] * inst.K
    if len(counts) != inst.K:
        raise ConfigError(f"--offline needs {inst.K} counts")
    p2 = SolverConfig.for_p2(cfg.delta)
    alloc = solve_P2(inst, counts, p2)
    p1_alloc, t_star = solve_P1(inst, counts, cfg.delta)
    rep = check_optimality(inst, counts, alloc, p2)
    print(f"instance      {cfg.family} {list(inst.means)}  best arm {inst.best_arm}")
    print(f"delta         {cfg.delta}")
    print(f"offline       {_fmt(counts)}")
    print(f"P2 allocation {_fmt(alloc)}  total {alloc.sum():.6g}")
    print(f"P1 allocation {_fmt(p1_alloc)}  T* {t_star:.6g}")
    tau1 = float(sum(counts))
    if tau1 > 0:
        sol = solve_P3(inst, np.asarray(counts) / tau1, tau1, cfg.delta)
        print(f"P3            z* {sol.z:.6g}  w* {_fmt(sol.w)}")
    print(f"optimality    max violation {rep.max_constraint_violation:.3e}  A1 {rep.active_set_A1}  A2 {rep.tight_zero_set_A2}")
    return 0


def cmd_run(args) -> int:
    cfg = _load(args)
    inst = cfg.instance
    tau1 = args.tau1 if args.tau1 is not None else cfg.offline_sizes[0]
    seed = args.seed
    out = sys.stdout
    if args.algo == "ucb-regret":
        counts = policy_counts(cfg.offline_policy, tau1, inst, seed)
        batch = oo_ucb_regret_batch(inst, counts, cfg.horizons, [seed])
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["algorithm", "tau1", "seed", "horizon", "pulls", "regret"])
        for h, pulls, reg in zip(batch.horizons, batch.pulls[:, 0], batch.regret[:, 0]):
            w.writerow(["ucb-regret", tau1, seed, h, " ".join(str(int(x)) for x in pulls), repr(float(reg))])
        return 0
    source = RewardSource(inst.family, inst.means, seed)
    offline, raw = generate_offline(cfg.offline_policy, tau1, inst, seed, source)
    w = csv.writer(out, lineterminator="\n")
    w.writerow(TRIAL_COLUMNS)
    if args.trace is not None and args.algo not in ("tas", "tas-beta"):
        raise ConfigError("--trace is only available for tas and tas-beta")
    try:
        if args.trace is not None:
            from .tas import run
            resolve = "beta" if args.algo == "tas-beta" else "p2"
            res = run(inst, offline, cfg.delta, rewards=source.online, max_steps=cfg.max_steps, trace=True, resolve=resolve)
            with open(args.trace, "w", newline="") as fh:
                tw = csv.writer(fh, lineterminator="\n")
                tw.writerow(["t", "arm", "statistic", "threshold"])
                tw.writerows(res.trace)
        else:
            res = run_algorithm(args.algo, inst, offline, raw, cfg.delta, source, cfg.max_steps)
    except BudgetExhausted as e:
        print(f"error: {e}", file=sys.stderr)
        w.writerow([args.algo, tau1, 0, seed, "", "", "", ""])
        return 3
    w.writerow([args.algo, tau1, 0, seed, res.stop_time, res.recommended_arm, int(res.correct), ""])
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    flags = {k: v for k, v in vars(args).items() if k != "func"}
    result = run_sweep(cfg, flags=flags, plots=not args.no_plots)
    for a in result.aggregates:
        print(f"{a.algorithm:<8} tau1={a.tau1:<7d} mean={a.mean_stop_time:<12.1f} q50={a.q50:<10.1f} error={a.error_rate:.3f} failed={a.failed}")
    for k, p in result.files.items():
        print(f"wrote {k}: {p}")
    return 0


def cmd_verify(args) -> int:
    cfg = _load(args)
    inst = cfg.instance
    ok = True
    out = cfg.resolved_output_dir()
    for tau1 in cfg.offline_sizes:
        if cfg.offline_policy.weights is not None:
            counts = [w * tau1 for w in cfg.offline_policy.weights]
        else:
            counts = policy_counts(cfg.offline_policy, tau1, inst)
        rep = verify(inst, counts, cfg.delta)
        print(f"# tau1={tau1} offline={counts}")
        for line in rep.lines():
            print(line)
        ok &= rep.passed
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out, cfg, {k: v for k, v in vars(args).items() if k != "func"}, {"verify_passed": ok})
    print("verification " + ("passed" if ok else "FAILED"))
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oobai", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="lower-bound allocations for one instance")
    s.add_argument("--config", required=True, type=Path)
    s.add_argument("--delta", type=float)
    s.add_argument("--offline", type=_parse_counts, help="comma-separated offline counts")
    s.set_defaults(func=cmd_solve)

    r = sub.add_parser("run", help="one run of one algorithm")
    r.add_argument("--algo", required=True, choices=ALGORITHMS)
    r.add_argument("--config", required=True, type=Path)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--trial", type=int, default=0, help="derive the seed from master_seed and this trial index")
    r.add_argument("--tau1", type=int)
    r.add_argument("--delta", type=float)
    r.add_argument("--trace", type=Path, help="write the per-step trace here (tas variants only)")
    r.set_defaults(func=cmd_run)

    w = sub.add_parser("sweep", help="Monte Carlo sweep over offline sizes")
    w.add_argument("--config", required=True, type=Path)
    w.add_argument("--trials", type=int)
    w.add_argument("--delta", type=float)
    w.add_argument("--jobs", type=int)
    w.add_argument("--no-plots", action="store_true")
    w.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="optimality and boundary-case battery")
    v.add_argument("--config", required=True, type=Path)
    v.add_argument("--delta", type=float)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run" and args.seed is None:
        args.seed = child_seed(ExperimentConfig.load(args.config).master_seed, args.trial)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
