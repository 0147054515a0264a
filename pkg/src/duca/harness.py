"""Experiment runner: config loading, policy comparisons, N/R sweeps, reports.

Config documents are JSON with these keys (all optional; defaults shown):

    {
      "model":   {"depth": 4, "hidden": 64, "heads": 4, "tokens": 64,
                  "classes": 10, "mlp_ratio": 4.0, "max_timesteps": 1000},
      "sampler": {"steps": 20, "beta_start": 1e-4, "beta_end": 0.02},
      "policy": "duca",            // none | conservative | aggressive | duca
      "cycle": 5,                  // cache cycle length N
      "ratio": 0.9,                // cache ratio R
      "skip_depth": null,          // null -> depth - 1
      "strategy": "random",        // see token_select.STRATEGY_NAMES
      "efficient_attention": true, // scores never materialized when true
      "class_label": 0,
      "model_seed": 0,
      "seeds": [0],
      "out": null                  // report directory
    }

Unknown keys are rejected; validation reports every problem at once.

Reports are byte-deterministic: JSON is dumped with sorted keys and floats
are formatted with Python's shortest round-trip repr (up to 17 significant
digits). `curves.csv` carries the exact header

    policy,seed,step,step_kind,error_l2,flops_step,flops_cum,computed_tokens

with one `step 0` row per (policy, seed) for the initial state followed by
one row per denoising step. The `computed_tokens` column holds the
per-sublayer computed-token count of the step's executed sublayers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .cache_engine import POLICIES, build_policy_schedule
from .dit_model import DiTModel, ModelConfig, init_model
from .errors import ConfigError
from .sampler import (
    Trajectory,
    caching_error,
    make_noise_schedule,
    run_reference,
    run_trajectory,
)
from .token_select import STRATEGY_NAMES, parse_strategy

CURVES_HEADER = "policy,seed,step,step_kind,error_l2,flops_step,flops_cum,computed_tokens"
GRID_HEADER = "N,R,flops_speedup,terminal_error"

_MODEL_KEYS = {"depth", "hidden", "heads", "tokens", "classes", "mlp_ratio",
               "max_timesteps"}
_SAMPLER_KEYS = {"steps", "beta_start", "beta_end"}
_TOP_KEYS = {"model", "sampler", "policy", "cycle", "ratio", "skip_depth",
             "strategy", "efficient_attention", "class_label", "model_seed",
             "seeds", "out"}


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig = ModelConfig()
    steps: int = 20
    beta_start: float = 1e-4
    beta_end: float = 0.02
    policy: str = "duca"
    cycle: int = 5
    ratio: float = 0.9
    skip_depth: int | None = None
    strategy: str = "random"
    efficient_attention: bool = True
    class_label: int = 0
    model_seed: int = 0
    seeds: tuple[int, ...] = (0,)
    out: str | None = None

    def validate(self) -> None:
        problems = []
        try:
            self.model.validate()
        except ConfigError as e:
            problems.append(str(e))
        if self.steps < 1:
            problems.append(f"steps must be >= 1, got {self.steps}")
        elif self.steps >= self.model.max_timesteps:
            problems.append(
                f"steps ({self.steps}) must be below max_timesteps ({self.model.max_timesteps})")
        if not 0.0 < self.beta_start <= self.beta_end < 1.0:
            problems.append(
                f"betas must satisfy 0 < start <= end < 1, got {self.beta_start}, {self.beta_end}")
        if self.policy not in POLICIES:
            problems.append(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if self.cycle < 1:
            problems.append(f"cycle must be >= 1, got {self.cycle}")
        if not 0.0 <= self.ratio < 1.0:
            problems.append(f"ratio must be in [0, 1), got {self.ratio}")
        if self.skip_depth is not None and not 1 <= self.skip_depth <= self.model.depth - 1:
            problems.append(
                f"skip_depth must be in [1, {self.model.depth - 1}], got {self.skip_depth}")
        if self.strategy not in STRATEGY_NAMES:
            problems.append(
                f"strategy must be one of {', '.join(STRATEGY_NAMES)}, got {self.strategy!r}")
        elif parse_strategy(self.strategy).needs_scores and self.efficient_attention:
            problems.append(
                f"strategy {self.strategy!r} needs attention scores; set efficient_attention to false")
        if not 0 <= self.class_label < self.model.classes:
            problems.append(
                f"class_label must be in [0, {self.model.classes}), got {self.class_label}")
        if len(self.seeds) == 0:
            problems.append("seeds must be non-empty")
        if problems:
            raise ConfigError("invalid experiment config: " + "; ".join(problems))


def _coerce_section(raw: dict, allowed: set[str], where: str, problems: list[str]) -> dict:
    unknown = sorted(set(raw) - allowed)
    if unknown:
        problems.append(f"unknown {where} keys: {', '.join(unknown)}")
    return {k: v for k, v in raw.items() if k in allowed}


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Build a validated config from a parsed JSON document."""
    problems: list[str] = []
    if not isinstance(doc, dict):
        raise ConfigError(f"config document must be a JSON object, got {type(doc).__name__}")
    top = _coerce_section(doc, _TOP_KEYS, "config", problems)
    model_raw = top.pop("model", {}) or {}
    sampler_raw = top.pop("sampler", {}) or {}
    if not isinstance(model_raw, dict):
        problems.append("model section must be an object")
        model_raw = {}
    if not isinstance(sampler_raw, dict):
        problems.append("sampler section must be an object")
        sampler_raw = {}
    model_kw = _coerce_section(model_raw, _MODEL_KEYS, "model", problems)
    sampler_kw = _coerce_section(sampler_raw, _SAMPLER_KEYS, "sampler", problems)

    def as_int(section: dict, key: str, where: str) -> None:
        if key in section and section[key] is not None:
            v = section[key]
            if isinstance(v, bool) or (isinstance(v, float) and not v.is_integer()):
                problems.append(f"{where}.{key} must be an integer, got {v!r}")
            else:
                try:
                    section[key] = int(v)
                except (TypeError, ValueError):
                    problems.append(f"{where}.{key} must be an integer, got {v!r}")

    for key in ("depth", "hidden", "heads", "tokens", "classes", "max_timesteps"):
        as_int(model_kw, key, "model")
    as_int(sampler_kw, "steps", "sampler")
    for key in ("cycle", "class_label", "model_seed", "skip_depth"):
        as_int(top, key, "config")
    if "seeds" in top:
        try:
            top["seeds"] = tuple(int(s) for s in top["seeds"])
        except (TypeError, ValueError):
            problems.append(f"config.seeds must be a list of integers, got {top['seeds']!r}")
    if problems:
        raise ConfigError("invalid experiment config: " + "; ".join(problems))
    cfg = ExperimentConfig(model=ModelConfig(**model_kw), **sampler_kw, **top)
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    """Parse and validate a JSON config file."""
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    return config_from_dict(doc)


@dataclass
class SeedRun:
    """One seed's policy run paired with its uncached reference."""

    seed: int
    step_kinds: list[str]
    error_trace: list[float]
    flops_steps: list[int]
    flops_total: int
    computed_tokens: list[int]
    reference_flops_total: int

    @property
    def terminal_error(self) -> float:
        return self.error_trace[-1]


@dataclass
class RunReport:
    """All seeds of one policy under one config, plus aggregates."""

    policy: str
    cycle: int
    ratio: float
    skip_depth: int
    strategy: str
    seeds: list[int]
    runs: list[SeedRun]
    flops_total: int
    uncached_flops: int
    speedup: float
    terminal_error_mean: float
    terminal_error_std: float

    def summary_dict(self) -> dict:
        return {
            "policy": self.policy,
            "cycle": self.cycle,
            "ratio": self.ratio,
            "skip_depth": self.skip_depth,
            "strategy": self.strategy,
            "seeds": list(self.seeds),
            "flops_total": self.flops_total,
            "uncached_flops": self.uncached_flops,
            "flops_speedup": self.speedup,
            "terminal_error_mean": self.terminal_error_mean,
            "terminal_error_std": self.terminal_error_std,
            "terminal_error_per_seed": [r.terminal_error for r in self.runs],
        }


def _references(model: DiTModel, cfg: ExperimentConfig) -> dict[int, Trajectory]:
    sched = make_noise_schedule(cfg.steps, cfg.beta_start, cfg.beta_end)
    return {seed: run_reference(model, sched, seed, cfg.class_label)
            for seed in cfg.seeds}


def run_experiment(cfg: ExperimentConfig, model: DiTModel | None = None,
                   references: dict[int, Trajectory] | None = None) -> RunReport:
    """Run the configured policy for every seed against an uncached reference.

    Writes report files only when `cfg.out` is set, and only after every
    seed completed (no partial results on failure).
    """
    cfg.validate()
    if model is None:
        model = init_model(cfg.model_seed, cfg.model)
    if references is None:
        references = _references(model, cfg)
    sched = make_noise_schedule(cfg.steps, cfg.beta_start, cfg.beta_end)
    plan = build_policy_schedule(cfg.steps, cfg.cycle, cfg.policy, cfg.ratio,
                                 cfg.skip_depth)
    runs = []
    for seed in cfg.seeds:
        ref = references[seed]
        traj = run_trajectory(model, plan, sched, seed, cfg.class_label,
                              strategy=cfg.strategy,
                              efficient_attention=cfg.efficient_attention)
        trace = caching_error(traj, ref)
        runs.append(SeedRun(
            seed=seed,
            step_kinds=[k.value for k in traj.step_kinds],
            error_trace=trace.values,
            flops_steps=traj.flops.per_step,
            flops_total=traj.flops.total,
            computed_tokens=traj.computed_tokens,
            reference_flops_total=ref.flops.total,
        ))
    totals = {r.flops_total for r in runs}
    if len(totals) != 1:
        raise RuntimeError(f"per-seed FLOPs diverged: {sorted(totals)}")
    flops_total = runs[0].flops_total
    uncached = runs[0].reference_flops_total
    terminals = np.array([r.terminal_error for r in runs])
    report = RunReport(
        policy=cfg.policy,
        cycle=cfg.cycle,
        ratio=cfg.ratio,
        skip_depth=cfg.skip_depth if cfg.skip_depth is not None else cfg.model.depth - 1,
        strategy=cfg.strategy,
        seeds=list(cfg.seeds),
        runs=runs,
        flops_total=flops_total,
        uncached_flops=uncached,
        speedup=uncached / flops_total,
        terminal_error_mean=float(terminals.mean()),
        terminal_error_std=float(terminals.std()),
    )
    if cfg.out is not None:
        write_report(report, cfg.out)
    return report


def compare_policies(cfg: ExperimentConfig,
                     policies: tuple[str, ...] = POLICIES) -> list[RunReport]:
    """Run several policies under one config, sharing model and references."""
    cfg.validate()
    model = init_model(cfg.model_seed, cfg.model)
    references = _references(model, cfg)
    return [run_experiment(replace(cfg, policy=p, out=None), model, references)
            for p in policies]


def ablation_grid(cfg: ExperimentConfig, cycles: list[int],
                  ratios: list[float]) -> list[RunReport]:
    """Dual-caching runs over the Cartesian (cycle, ratio) grid."""
    if not cycles or not ratios:
        raise ConfigError("grid needs non-empty cycle and ratio lists")
    cfg.validate()
    model = init_model(cfg.model_seed, cfg.model)
    references = _references(model, cfg)
    reports = []
    for n in cycles:
        for r in ratios:
            cell = replace(cfg, policy="duca", cycle=n, ratio=r, out=None)
            reports.append(run_experiment(cell, model, references))
    return reports


# ---------------------------------------------------------------------------
# Report writing. All numbers are formatted for byte-stable output.
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _curve_rows(report: RunReport) -> list[str]:
    rows = []
    for run in report.runs:
        rows.append(",".join([report.policy, str(run.seed), "0", "init",
                              _fmt(run.error_trace[0]), "0", "0", "0"]))
        cum = 0
        for i, kind in enumerate(run.step_kinds):
            cum += run.flops_steps[i]
            rows.append(",".join([
                report.policy, str(run.seed), str(i + 1), kind,
                _fmt(run.error_trace[i + 1]), str(run.flops_steps[i]),
                str(cum), str(run.computed_tokens[i]),
            ]))
    return rows


def write_report(reports: RunReport | list[RunReport], out_dir) -> list[Path]:
    """Emit summary.json and curves.csv for one or more policy reports."""
    if isinstance(reports, RunReport):
        reports = [reports]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    curves = out / "curves.csv"
    lines = [CURVES_HEADER]
    for rep in reports:
        lines.extend(_curve_rows(rep))
    curves.write_text("\n".join(lines) + "\n")
    summary = out / "summary.json"
    payload = {"policies": [rep.summary_dict() for rep in reports]}
    summary.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return [summary, curves]


def write_grid(reports: list[RunReport], out_dir) -> Path:
    """Emit grid.csv with one row per (cycle, ratio) cell."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [GRID_HEADER]
    for rep in reports:
        lines.append(",".join([str(rep.cycle), _fmt(rep.ratio),
                               _fmt(rep.speedup), _fmt(rep.terminal_error_mean)]))
    path = out / "grid.csv"
    path.write_text("\n".join(lines) + "\n")
    return path
