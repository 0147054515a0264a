"""Deterministic DDIM-style reverse process with caching-error instrumentation.

The reverse update uses the posterior mean with zero injected noise, so two
runs from the same seed differ only through caching substitutions. That
makes the per-step L2 distance between a cached and an uncached trajectory
a well-defined caching error.

The fixed positional offset is added to the initial noise once per
trajectory; model forwards themselves stay permutation-equivariant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cache_engine import (
    FeatureCache,
    SchedulePlan,
    StepKind,
    StepRecord,
    aggressive_step_flops,
    conservative_step_flops,
    execute_step,
)
from .dit_model import DiTModel, forward_flops, model_forward_full
from .errors import ConfigError, ShapeError
from .tensor_core import FlopsMeter, Tensor
from .token_select import SelectionStrategy, parse_strategy


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear-beta schedule; index i of each array holds timestep t = i + 1."""

    steps: int
    beta: np.ndarray
    alpha: np.ndarray
    bar_alpha: np.ndarray


def make_noise_schedule(steps: int, beta_start: float = 1e-4,
                        beta_end: float = 0.02) -> NoiseSchedule:
    problems = []
    if steps < 1:
        problems.append(f"steps must be >= 1, got {steps}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        problems.append(
            f"betas must satisfy 0 < start <= end < 1, got start={beta_start} end={beta_end}")
    if problems:
        raise ConfigError("; ".join(problems))
    beta = np.linspace(beta_start, beta_end, steps)
    alpha = 1.0 - beta
    return NoiseSchedule(steps=steps, beta=beta, alpha=alpha,
                         bar_alpha=np.cumprod(alpha))


def reverse_step(x_t: Tensor, eps_pred: Tensor, t: int,
                 sched: NoiseSchedule) -> Tensor:
    """One denoising update x_t -> x_{t-1} (posterior mean, eta = 0)."""
    if t < 1:
        raise IndexError(f"reverse step needs timestep t >= 1, got {t}")
    if t > sched.steps:
        raise IndexError(f"timestep {t} beyond schedule of {sched.steps} steps")
    if x_t.shape != eps_pred.shape:
        raise ShapeError(
            f"latent {x_t.shape} and noise prediction {eps_pred.shape} differ")
    a_t = sched.alpha[t - 1]
    ab_t = sched.bar_alpha[t - 1]
    coef = (1.0 - a_t) / np.sqrt(1.0 - ab_t)
    return Tensor._wrap((x_t.numpy() - coef * eps_pred.numpy()) / np.sqrt(a_t))


@dataclass
class FlopsReport:
    per_step: list[int]
    total: int


@dataclass
class Trajectory:
    """States x_T .. x_0 plus the per-step log of one run."""

    states: list[Tensor]
    step_kinds: list[StepKind]
    records: list[StepRecord]
    flops: FlopsReport
    seed: int
    class_label: int

    @property
    def computed_tokens(self) -> list[int]:
        return [r.computed_tokens for r in self.records]


def initial_state(model: DiTModel, seed: int) -> tuple[np.ndarray, np.random.Generator]:
    """Seeded x_T (noise plus positional offset) and the selection stream."""
    root = np.random.default_rng(seed)
    noise_rng, select_rng = root.spawn(2)
    cfg = model.config
    x = noise_rng.standard_normal((cfg.tokens, cfg.hidden)) + model.pos_encoding
    return x, select_rng


def run_trajectory(model: DiTModel, plan: SchedulePlan, sched: NoiseSchedule,
                   seed: int, class_label: int,
                   strategy: SelectionStrategy | str = "random",
                   efficient_attention: bool = True) -> Trajectory:
    """Execute `plan` from seeded noise down to x_0.

    The seed fixes both the initial noise and the token-selection stream, so
    equal (seed, plan) runs are bit-identical and runs that share a seed but
    differ in plan still start from the same x_T.
    """
    if plan.steps != sched.steps:
        raise ConfigError(
            f"plan length {plan.steps} != schedule steps {sched.steps}")
    if isinstance(strategy, str):
        strategy = parse_strategy(strategy)
    depth = model.config.depth
    skip_depth = plan.skip_depth if plan.skip_depth is not None else depth - 1
    if not 1 <= skip_depth <= depth - 1:
        raise ConfigError(
            f"skip depth must be in [1, {depth - 1}] for depth {depth}, got {skip_depth}")

    x0, select_rng = initial_state(model, seed)
    meter = FlopsMeter()
    cache = FeatureCache(model, expose_scores=not efficient_attention)
    records: list[StepRecord] = []
    states = [Tensor._wrap(x0)]
    total = sched.steps
    for i, kind in enumerate(plan.kinds):
        t = total - i
        eps = execute_step(kind, model, cache, states[-1], t=t,
                           class_label=class_label, ratio=plan.ratio,
                           strategy=strategy, select_rng=select_rng,
                           skip_depth=skip_depth, meter=meter, log=records)
        states.append(reverse_step(states[-1], eps, t, sched))
    return Trajectory(states=states, step_kinds=list(plan.kinds),
                      records=records,
                      flops=FlopsReport([r.flops for r in records], meter.total),
                      seed=seed, class_label=class_label)


def run_reference(model: DiTModel, sched: NoiseSchedule, seed: int,
                  class_label: int) -> Trajectory:
    """The uncached pipeline: plain full forwards, no cache machinery."""
    x0, _ = initial_state(model, seed)
    meter = FlopsMeter()
    records: list[StepRecord] = []
    states = [Tensor._wrap(x0)]
    n = model.config.tokens
    for i in range(sched.steps):
        t = sched.steps - i
        before = meter.total
        eps = model_forward_full(model, states[-1], t, class_label, meter)
        records.append(StepRecord(t, StepKind.FRESH, meter.total - before, n))
        states.append(reverse_step(states[-1], eps, t, sched))
    return Trajectory(states=states, step_kinds=[StepKind.FRESH] * sched.steps,
                      records=records,
                      flops=FlopsReport([r.flops for r in records], meter.total),
                      seed=seed, class_label=class_label)


@dataclass
class ErrorTrace:
    """Per-state L2 distance between a cached run and its reference."""

    values: list[float]

    @property
    def terminal(self) -> float:
        return self.values[-1]


def caching_error(cached: Trajectory, reference: Trajectory) -> ErrorTrace:
    """L2 norm of the state difference at every step, x_T down to x_0."""
    if len(cached.states) != len(reference.states):
        raise ShapeError(
            f"trajectory lengths differ: {len(cached.states)} vs {len(reference.states)}")
    values = []
    for a, b in zip(cached.states, reference.states):
        if a.shape != b.shape:
            raise ShapeError(f"state shapes differ: {a.shape} vs {b.shape}")
        values.append(float(np.linalg.norm(a.numpy() - b.numpy())))
    return ErrorTrace(values)


def policy_flops(model: DiTModel, plan: SchedulePlan) -> int:
    """Analytic total cost of a plan (the meter must agree exactly)."""
    cfg = model.config
    skip = plan.skip_depth if plan.skip_depth is not None else cfg.depth - 1
    per_kind = {
        StepKind.FRESH: forward_flops(cfg),
        StepKind.CONSERVATIVE: conservative_step_flops(cfg, plan.ratio),
        StepKind.AGGRESSIVE: aggressive_step_flops(cfg, skip),
    }
    return sum(per_kind[k] for k in plan.kinds)
