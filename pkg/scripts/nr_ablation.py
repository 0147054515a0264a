#!/usr/bin/env python3
"""Sweep cycle length N and cache ratio R under the dual-caching policy.

Produces grid.csv (N, R, flops_speedup, terminal_error) for plotkit's
ablation figure.

    python scripts/nr_ablation.py --out runs/grid --cycles 3,4,5,6,7,8 --ratios 0.5,0.7,0.9
"""
import argparse
import sys

from duca.harness import ExperimentConfig, ablation_grid, write_grid


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/grid")
    ap.add_argument("--seeds", default="0,1,2,3,4")
    ap.add_argument("--cycles", default="3,4,5,6,7,8")
    ap.add_argument("--ratios", default="0.5,0.7,0.9")
    args = ap.parse_args()

    cfg = ExperimentConfig(seeds=tuple(int(s) for s in args.seeds.split(",")))
    cycles = [int(x) for x in args.cycles.split(",")]
    ratios = [float(x) for x in args.ratios.split(",")]
    reports = ablation_grid(cfg, cycles, ratios)
    for rep in reports:
        print(f"N={rep.cycle} R={rep.ratio:4.2f} speedup={rep.speedup:6.3f} "
              f"terminal_error={rep.terminal_error_mean:.6g}")
    path = write_grid(reports, args.out)
    print("wrote", path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
