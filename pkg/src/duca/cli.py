"""Command-line entry point.

Subcommands:
    run      one policy under one config; writes summary.json + curves.csv
    grid     dual-caching sweep over cycle and ratio lists; writes grid.csv
    compare  the four policies (none / conservative / aggressive / duca)
             under one config; combined summary.json + curves.csv

Exit codes: 0 success, 2 configuration error, 3 runtime/numeric error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .cache_engine import POLICIES
from .errors import ConfigError
from .harness import (
    ExperimentConfig,
    ablation_grid,
    compare_policies,
    load_config,
    run_experiment,
    write_grid,
    write_report,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config; defaults apply if omitted")
    p.add_argument("--strategy", help="token selection strategy name")
    p.add_argument("--seeds", help="comma-separated seed list, e.g. 0,1,2")
    p.add_argument("--out", help="report output directory")


def _parse_int_list(text: str, what: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x != ""]
    except ValueError as e:
        raise ConfigError(f"bad {what} list {text!r}: {e}") from e


def _parse_float_list(text: str, what: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x != ""]
    except ValueError as e:
        raise ConfigError(f"bad {what} list {text!r}: {e}") from e


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if getattr(args, "policy", None) is not None:
        overrides["policy"] = args.policy
    if getattr(args, "cycle", None) is not None and isinstance(args.cycle, int):
        overrides["cycle"] = args.cycle
    if getattr(args, "ratio", None) is not None and isinstance(args.ratio, float):
        overrides["ratio"] = args.ratio
    if args.strategy is not None:
        overrides["strategy"] = args.strategy
    if args.seeds is not None:
        overrides["seeds"] = tuple(_parse_int_list(args.seeds, "seed"))
    if args.out is not None:
        overrides["out"] = args.out
    if overrides:
        cfg = replace(cfg, **overrides)
    cfg.validate()
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="duca",
        description="Dual feature caching experiments on a toy diffusion transformer")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one policy")
    run.add_argument("--policy", choices=POLICIES)
    run.add_argument("--cycle", type=int, help="cache cycle length N")
    run.add_argument("--ratio", type=float, help="cache ratio R in [0, 1)")
    _add_common(run)

    grid = sub.add_parser("grid", help="sweep cycle x ratio under the duca policy")
    grid.add_argument("--cycle", help="comma-separated cycle lengths, e.g. 3,4,5")
    grid.add_argument("--ratio", help="comma-separated cache ratios, e.g. 0.5,0.7,0.9")
    _add_common(grid)

    cmp_ = sub.add_parser("compare", help="run all four policies")
    cmp_.add_argument("--cycle", type=int, help="cache cycle length N")
    cmp_.add_argument("--ratio", type=float, help="cache ratio R in [0, 1)")
    _add_common(cmp_)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = _load(args)
            report = run_experiment(cfg)
            print(f"policy={report.policy} flops={report.flops_total} "
                  f"speedup={report.speedup:.3f} "
                  f"terminal_error={report.terminal_error_mean:.6g}")
            if cfg.out is None:
                print("note: no --out given, nothing written")
        elif args.command == "grid":
            cfg = _load(args)
            cycles = _parse_int_list(args.cycle, "cycle") if args.cycle else [3, 4, 5, 6, 7, 8]
            ratios = _parse_float_list(args.ratio, "ratio") if args.ratio else [cfg.ratio]
            reports = ablation_grid(cfg, cycles, ratios)
            for rep in reports:
                print(f"N={rep.cycle} R={rep.ratio} speedup={rep.speedup:.3f} "
                      f"terminal_error={rep.terminal_error_mean:.6g}")
            if cfg.out is not None:
                write_grid(reports, cfg.out)
            else:
                print("note: no --out given, nothing written")
        elif args.command == "compare":
            cfg = _load(args)
            reports = compare_policies(cfg)
            for rep in reports:
                print(f"policy={rep.policy} flops={rep.flops_total} "
                      f"speedup={rep.speedup:.3f} "
                      f"terminal_error={rep.terminal_error_mean:.6g}")
            if cfg.out is not None:
                write_report(reports, cfg.out)
            else:
                print("note: no --out given, nothing written")
        else:  # pragma: no cover - argparse enforces the choices
            raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
