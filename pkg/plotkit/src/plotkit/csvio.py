"""Readers for the experiment report CSV contracts.

Two inputs exist: per-step curve files with the exact header

    policy,seed,step,step_kind,error_l2,flops_step,flops_cum,computed_tokens

and grid summaries with the header

    N,R,flops_speedup,terminal_error

Header validation is strict; a missing column is reported by name.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CURVES_COLUMNS = ("policy", "seed", "step", "step_kind", "error_l2",
                  "flops_step", "flops_cum", "computed_tokens")
GRID_COLUMNS = ("N", "R", "flops_speedup", "terminal_error")


class FormatError(ValueError):
    """The CSV does not match the published report contract."""


def _check_header(found: list[str] | None, expected: tuple[str, ...], path) -> None:
    found = found or []
    missing = [c for c in expected if c not in found]
    if missing:
        raise FormatError(
            f"{path}: header is missing column(s) {', '.join(missing)}; "
            f"expected exactly: {','.join(expected)}")
    if list(found) != list(expected):
        raise FormatError(
            f"{path}: header {','.join(found)} does not match the contract "
            f"{','.join(expected)}")


@dataclass
class CurveSeries:
    """One policy's error curve: per-step mean and stddev across seeds."""

    policy: str
    steps: list[int]
    mean: np.ndarray
    std: np.ndarray
    fresh_steps: list[int]


@dataclass
class CurveSet:
    series: list[CurveSeries]

    def validate(self) -> None:
        lengths = {len(s.steps) for s in self.series}
        if len(lengths) > 1:
            raise FormatError(f"series lengths differ across policies: {sorted(lengths)}")
        for s in self.series:
            diffs = np.diff(s.steps)
            if s.steps and (diffs <= 0).any():
                raise FormatError(f"policy {s.policy}: steps not strictly increasing")

    @property
    def policies(self) -> list[str]:
        return [s.policy for s in self.series]


def read_curves(path) -> CurveSet:
    path = Path(path)
    with path.open(newline="") as f:
        reader = csv.reader(f)
        _check_header(next(reader, None), CURVES_COLUMNS, path)
        rows = list(reader)
    # policy -> seed -> step -> (error, kind)
    per_policy: dict[str, dict[str, dict[int, tuple[float, str]]]] = {}
    order: list[str] = []
    for line_no, row in enumerate(rows, start=2):
        if len(row) != len(CURVES_COLUMNS):
            raise FormatError(f"{path}:{line_no}: expected {len(CURVES_COLUMNS)} fields, got {len(row)}")
        policy, seed, step, kind, err = row[0], row[1], int(row[2]), row[3], float(row[4])
        if policy not in per_policy:
            per_policy[policy] = {}
            order.append(policy)
        per_policy[policy].setdefault(seed, {})[step] = (err, kind)
    series = []
    for policy in order:
        seeds = per_policy[policy]
        step_sets = {tuple(sorted(d)) for d in seeds.values()}
        if len(step_sets) != 1:
            raise FormatError(f"{path}: policy {policy}: seeds disagree on step grid")
        steps = list(step_sets.pop())
        errs = np.array([[seeds[sd][st][0] for st in steps] for sd in sorted(seeds)])
        first = seeds[sorted(seeds)[0]]
        fresh = [st for st in steps if first[st][1] == "fresh"]
        series.append(CurveSeries(policy=policy, steps=steps,
                                  mean=errs.mean(axis=0), std=errs.std(axis=0),
                                  fresh_steps=fresh))
    cs = CurveSet(series)
    cs.validate()
    return cs


@dataclass
class GridCell:
    cycle: int
    ratio: float
    speedup: float
    terminal_error: float


def read_grid(path) -> list[GridCell]:
    path = Path(path)
    with path.open(newline="") as f:
        reader = csv.reader(f)
        _check_header(next(reader, None), GRID_COLUMNS, path)
        cells = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(GRID_COLUMNS):
                raise FormatError(f"{path}:{line_no}: expected {len(GRID_COLUMNS)} fields, got {len(row)}")
            cells.append(GridCell(cycle=int(row[0]), ratio=float(row[1]),
                                  speedup=float(row[2]), terminal_error=float(row[3])))
    if not cells:
        raise FormatError(f"{path}: grid has no data rows")
    return cells
