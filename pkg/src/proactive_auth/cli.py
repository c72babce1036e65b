"""``auth-sim`` command line: run experiments, audit refresh schedules, estimate coverage."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .channel import ConfigurationError
from .harness import load_configs, results_csv, results_json, run_experiment
from .refresh import (
    audit_deterministic_schedule,
    coverage_probability,
    coverage_record,
    default_refresh_count,
    dense_schedule,
)


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_run(args: argparse.Namespace) -> int:
    overrides = {
        "protocol": args.protocol,
        "n": args.n,
        "l": args.l,
        "trials": args.trials,
        "master_seed": args.seed,
    }
    configs = load_configs(Path(args.config).read_text(encoding="utf-8"), overrides)
    results = [run_experiment(c) for c in configs]
    _write(results_csv(results) if args.format == "csv" else results_json(results), args.out)
    return 0 if all(r.passed for r in results) else 1


def cmd_audit(args: argparse.Namespace) -> int:
    """Config: ``{"n": 16, "k_private": [1, 2] | k | "all", "schedule": "dense" | [[...], ...]}``."""
    doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    n = int(doc["n"])
    sched = doc.get("schedule", "dense")
    schedule = dense_schedule(n) if sched == "dense" else sched
    ks = doc.get("k_private", "all")
    if ks == "all":
        ks = list(range(1, n))
    elif isinstance(ks, int):
        ks = [ks]
    reports = [audit_deterministic_schedule(schedule, n, k) for k in ks]
    lines = [r.to_json() for r in reports]
    _write("\n".join(lines) + "\n", args.out)
    return 0 if all(r.passed for r in reports) else 1


def cmd_coverage(args: argparse.Namespace) -> int:
    est = coverage_probability(args.n, args.r, args.sessions, args.trials, seed=args.seed)
    rec = coverage_record(est, args.k_private)
    _write(json.dumps(rec, sort_keys=True) + "\n", args.out)
    return 0 if rec["pass"] else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="auth-sim", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run Monte Carlo experiments from a JSON config")
    run.add_argument("--config", required=True)
    run.add_argument("--protocol", choices=("ap1", "ap2", "ap2t"))
    run.add_argument("--n", type=int)
    run.add_argument("--l", type=int)
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int, help="master seed override")
    run.add_argument("--out")
    run.add_argument("--format", choices=("csv", "json"), default="csv")
    run.set_defaults(func=cmd_run)

    audit = sub.add_parser("audit-schedule", help="audit a deterministic refresh schedule")
    audit.add_argument("--config", required=True)
    audit.add_argument("--out")
    audit.set_defaults(func=cmd_audit)

    cov = sub.add_parser("coverage", help="estimate sparse refresh coverage")
    cov.add_argument("--n", type=int, required=True)
    cov.add_argument("--r", type=int)
    cov.add_argument("--sessions", type=int)
    cov.add_argument("--trials", type=int, default=100_000)
    cov.add_argument("--seed", type=int, default=0)
    cov.add_argument("--k-private", type=int, dest="k_private")
    cov.add_argument("--out")
    cov.set_defaults(func=cmd_coverage)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "coverage":
        if args.r is None:
            args.r = default_refresh_count(args.n)
        if args.sessions is None:
            args.sessions = args.n
    try:
        return args.func(args)
    except (ConfigurationError, ValueError, KeyError) as exc:
        print(f"auth-sim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
