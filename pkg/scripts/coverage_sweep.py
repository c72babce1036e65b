"""Sparse refresh coverage: Monte Carlo estimate against the exact inclusion-exclusion value."""

from __future__ import annotations

import argparse

from proactive_auth.refresh import coverage_probability, default_refresh_count, exact_coverage_probability


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, nargs="+", default=[16, 32, 64])
    ap.add_argument("--trials", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"{'n':>4} {'r':>4} {'sessions':>8} {'monte carlo':>12} {'stderr':>9} {'exact':>9} {'1-1/n':>7}")
    for n in args.n:
        r = default_refresh_count(n)
        for sessions in (1, n // 4, n // 2, n):
            if sessions < 1:
                continue
            est = coverage_probability(n, r, sessions, args.trials, seed=args.seed)
            exact = float(exact_coverage_probability(n, r, sessions))
            print(f"{n:4d} {r:4d} {sessions:8d} {est.estimate:12.5f} {est.stderr:9.5f} {exact:9.5f} {est.bound:7.4f}")


if __name__ == "__main__":
    main()
