#!/usr/bin/env python3
"""Run the four policies on the default desk model and write reports.

Produces the policy-comparison artifacts (combined curves.csv + summary.json)
that plotkit's error-curve figure consumes.

    python scripts/compare_policies.py --out runs/compare --seeds 0,1,2
"""
import argparse
import sys

from duca.harness import ExperimentConfig, compare_policies, write_report


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/compare")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--cycle", type=int, default=5)
    ap.add_argument("--ratio", type=float, default=0.9)
    ap.add_argument("--strategy", default="random")
    args = ap.parse_args()

    cfg = ExperimentConfig(cycle=args.cycle, ratio=args.ratio,
                           strategy=args.strategy,
                           seeds=tuple(int(s) for s in args.seeds.split(",")))
    reports = compare_policies(cfg)
    for rep in reports:
        print(f"{rep.policy:13s} flops={rep.flops_total:>12d} "
              f"speedup={rep.speedup:6.3f} "
              f"terminal_error={rep.terminal_error_mean:.6g} "
              f"(+/- {rep.terminal_error_std:.3g})")
    files = write_report(reports, args.out)
    print("wrote", *map(str, files))
    return 0


if __name__ == "__main__":
    sys.exit(main())
