"""Feature cache, the three step executors, and the alternating schedule.

A denoising run holds one `FeatureCache` storing, per block: the two
sublayer branch values (the non-residual AdaLN(f(x)) terms), the block
output, the attention keys/values, and per-token freshness stamps.

Step kinds
----------
fresh         full forward; every cache entry rewritten and stamped
conservative  per sublayer, an independently drawn token partition; only
              the computed tokens' branch rows (and their key/value rows)
              are refreshed, the rest are read from the cache; computed
              queries attend over the full-length mixed-freshness K/V
aggressive    the first `skip_depth` blocks are skipped outright: the
              cached output of block `skip_depth` becomes the running
              feature and only the remaining blocks are computed (the
              latent argument is unused; its information enters through
              the cache)

The dual-caching schedule runs cycles of length N: a fresh step, then
conservative steps on odd cycle positions and aggressive steps on even
ones. Timestep conditioning is recomputed every step and never cached.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .dit_model import (
    SUBLAYER_SA,
    SUBLAYERS,
    DiTModel,
    block_flops,
    embed_condition_nd,
    sublayer_branch_rows,
)
from .errors import CacheStateError, ConfigError
from .tensor_core import FlopsMeter, Tensor
from .token_select import SelectionContext, SelectionStrategy, compute_count, select


class StepKind(str, enum.Enum):
    FRESH = "fresh"
    CONSERVATIVE = "conservative"
    AGGRESSIVE = "aggressive"

    def __str__(self) -> str:  # pragma: no cover - repr convenience
        return self.value


POLICY_NONE = "none"
POLICY_CONSERVATIVE = "conservative"
POLICY_AGGRESSIVE = "aggressive"
POLICY_DUCA = "duca"
POLICIES = (POLICY_NONE, POLICY_CONSERVATIVE, POLICY_AGGRESSIVE, POLICY_DUCA)


@dataclass(frozen=True)
class SchedulePlan:
    """Per-timestep step kinds plus the knobs the executors need."""

    kinds: tuple[StepKind, ...]
    cycle: int
    ratio: float = 0.9
    skip_depth: int | None = None  # None resolves to model depth - 1 at run time

    @property
    def steps(self) -> int:
        return len(self.kinds)


def _check_schedule_args(total_steps: int, cycle: int, ratio: float) -> None:
    problems = []
    if total_steps < 1:
        problems.append(f"total steps must be >= 1, got {total_steps}")
    if cycle < 1:
        problems.append(f"cycle length must be >= 1, got {cycle}")
    if not 0.0 <= ratio < 1.0:
        problems.append(f"cache ratio must be in [0, 1), got {ratio}")
    if problems:
        raise ConfigError("; ".join(problems))


def build_schedule(total_steps: int, cycle: int, ratio: float = 0.9,
                   skip_depth: int | None = None) -> SchedulePlan:
    """The alternating plan: fresh at each cycle start, conservative on odd
    cycle positions, aggressive on even ones. A trailing partial cycle is
    simply truncated."""
    _check_schedule_args(total_steps, cycle, ratio)
    kinds = []
    for i in range(total_steps):
        p = i % cycle
        if p == 0:
            kinds.append(StepKind.FRESH)
        elif p % 2 == 1:
            kinds.append(StepKind.CONSERVATIVE)
        else:
            kinds.append(StepKind.AGGRESSIVE)
    return SchedulePlan(tuple(kinds), cycle, ratio, skip_depth)


def build_policy_schedule(total_steps: int, cycle: int, policy: str,
                          ratio: float = 0.9,
                          skip_depth: int | None = None) -> SchedulePlan:
    """Plans for the four run policies. `none` disables caching entirely;
    `conservative`/`aggressive` use a single caching kind after each fresh
    step; `duca` alternates."""
    if policy == POLICY_DUCA:
        return build_schedule(total_steps, cycle, ratio, skip_depth)
    _check_schedule_args(total_steps, cycle, ratio)
    if policy == POLICY_NONE:
        return SchedulePlan((StepKind.FRESH,) * total_steps, 1, ratio, skip_depth)
    if policy == POLICY_CONSERVATIVE:
        caching = StepKind.CONSERVATIVE
    elif policy == POLICY_AGGRESSIVE:
        caching = StepKind.AGGRESSIVE
    else:
        raise ConfigError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    kinds = tuple(StepKind.FRESH if i % cycle == 0 else caching
                  for i in range(total_steps))
    return SchedulePlan(kinds, cycle, ratio, skip_depth)


class FeatureCache:
    """Mutable per-run store of branch values, block outputs, and K/V rows.

    Owned by exactly one trajectory; reads before the first fresh step are
    rejected. `expose_scores` additionally retains each block's latest
    attention score matrix for score-based token selection.
    """

    def __init__(self, model: DiTModel, expose_scores: bool = False) -> None:
        cfg = model.config
        n, d, depth, heads = cfg.tokens, cfg.hidden, cfg.depth, cfg.heads
        self.expose_scores = expose_scores
        self.branch = [{s: np.zeros((n, d)) for s in SUBLAYERS} for _ in range(depth)]
        self.block_out = [np.zeros((n, d)) for _ in range(depth)]
        self.keys = [np.zeros((n, d)) for _ in range(depth)]
        self.values = [np.zeros((n, d)) for _ in range(depth)]
        self.attn_scores = [np.zeros((heads, n, n)) if expose_scores else None
                            for _ in range(depth)]
        self.freshness = [{s: np.full(n, -1, dtype=np.int64) for s in SUBLAYERS}
                          for _ in range(depth)]
        self.block_out_stamp = [-1] * depth
        self.initialized = False

    def require_initialized(self) -> None:
        if not self.initialized:
            raise CacheStateError("cache read before any fresh step populated it")


def _store_sa(cache: FeatureCache, l: int, rows, k_new, v_new, scores) -> None:
    if rows is None:
        cache.keys[l][:] = k_new
        cache.values[l][:] = v_new
        if cache.expose_scores and scores is not None:
            cache.attn_scores[l][:] = scores
    else:
        cache.keys[l][rows] = k_new
        cache.values[l][rows] = v_new
        if cache.expose_scores and scores is not None:
            cache.attn_scores[l][:, rows, :] = scores


def fresh_step(model: DiTModel, cache: FeatureCache, x_t: Tensor, t: int, c: int,
               meter: FlopsMeter | None = None) -> Tensor:
    """Full forward that (re)writes every cache entry with stamp `t`."""
    cond = embed_condition_nd(model, t, c)
    h = x_t.numpy()
    for l in range(model.config.depth):
        for s in SUBLAYERS:
            br = sublayer_branch_rows(model, l, s, h, cond, meter,
                                      expose_scores=cache.expose_scores)
            cache.branch[l][s][:] = br.value
            if s == SUBLAYER_SA:
                _store_sa(cache, l, None, br.k_new, br.v_new, br.scores)
            cache.freshness[l][s][:] = t
            h = h + br.value
        cache.block_out[l][:] = h
        cache.block_out_stamp[l] = t
    cache.initialized = True
    return Tensor._wrap(h)


def conservative_step(model: DiTModel, cache: FeatureCache, x_t: Tensor, t: int,
                      c: int, ratio: float, strategy: SelectionStrategy,
                      rng: np.random.Generator,
                      meter: FlopsMeter | None = None) -> Tensor:
    """Token-wise caching step.

    Every (block, sublayer) draws its own partition. Computed tokens get
    fresh branch rows (written back, stamp `t`); cached tokens reuse their
    stored rows. The residual add and the block output cover all tokens.
    """
    cache.require_initialized()
    cond = embed_condition_nd(model, t, c)
    h = x_t.numpy()
    for l in range(model.config.depth):
        for s in SUBLAYERS:
            ctx = SelectionContext(hidden=h, keys=cache.keys[l],
                                   values=cache.values[l],
                                   scores=cache.attn_scores[l])
            rows = select(strategy, ctx, ratio, rng).compute_idx
            br = sublayer_branch_rows(model, l, s, h, cond, meter,
                                      expose_scores=cache.expose_scores,
                                      rows=rows, k_cache=cache.keys[l],
                                      v_cache=cache.values[l])
            cache.branch[l][s][rows] = br.value
            if s == SUBLAYER_SA:
                _store_sa(cache, l, rows, br.k_new, br.v_new, br.scores)
            cache.freshness[l][s][rows] = t
            h = h + cache.branch[l][s]
        cache.block_out[l][:] = h
        cache.block_out_stamp[l] = t
    return Tensor._wrap(h)


def aggressive_step(model: DiTModel, cache: FeatureCache, x_t: Tensor, t: int,
                    c: int, skip_depth: int,
                    meter: FlopsMeter | None = None) -> Tensor:
    """Block-skip caching step.

    The cached output of block `skip_depth` replaces the first `skip_depth`
    blocks; the remaining blocks run fully (all tokens) and write back.
    `x_t` is intentionally unused: the step is a pure function of the cache
    and the conditioning.
    """
    depth = model.config.depth
    if not 1 <= skip_depth <= depth - 1:
        raise ConfigError(
            f"skip depth must be in [1, {depth - 1}] for depth {depth}, got {skip_depth}")
    cache.require_initialized()
    cond = embed_condition_nd(model, t, c)
    h = cache.block_out[skip_depth - 1].copy()
    for l in range(skip_depth, depth):
        for s in SUBLAYERS:
            br = sublayer_branch_rows(model, l, s, h, cond, meter,
                                      expose_scores=cache.expose_scores)
            cache.branch[l][s][:] = br.value
            if s == SUBLAYER_SA:
                _store_sa(cache, l, None, br.k_new, br.v_new, br.scores)
            cache.freshness[l][s][:] = t
            h = h + br.value
        cache.block_out[l][:] = h
        cache.block_out_stamp[l] = t
    return Tensor._wrap(h)


@dataclass(frozen=True)
class StepRecord:
    """One run-log entry: what ran at a timestep and what it cost."""

    timestep: int
    kind: StepKind
    flops: int
    computed_tokens: int


def execute_step(kind: StepKind, model: DiTModel, cache: FeatureCache,
                 x_t: Tensor, *, t: int, class_label: int, ratio: float,
                 strategy: SelectionStrategy | None,
                 select_rng: np.random.Generator | None, skip_depth: int,
                 meter: FlopsMeter,
                 log: list[StepRecord] | None = None) -> Tensor:
    """Dispatch to the matching executor and append a run-log record."""
    n = model.config.tokens
    before = meter.total
    if kind is StepKind.FRESH:
        out = fresh_step(model, cache, x_t, t, class_label, meter)
        computed = n
    elif kind is StepKind.CONSERVATIVE:
        if strategy is None or select_rng is None:
            raise ConfigError("conservative steps need a selection strategy and rng")
        out = conservative_step(model, cache, x_t, t, class_label, ratio,
                                strategy, select_rng, meter)
        computed = compute_count(n, ratio)
    elif kind is StepKind.AGGRESSIVE:
        out = aggressive_step(model, cache, x_t, t, class_label, skip_depth, meter)
        computed = n
    else:
        raise ConfigError(f"unknown step kind {kind!r}")
    if log is not None:
        log.append(StepRecord(t, kind, meter.total - before, computed))
    return out


def conservative_step_flops(model_cfg, ratio: float) -> int:
    """Analytic cost of one conservative step at the given cache ratio."""
    c = compute_count(model_cfg.tokens, ratio)
    return model_cfg.depth * block_flops(model_cfg, rows=c)


def aggressive_step_flops(model_cfg, skip_depth: int) -> int:
    """Analytic cost of one aggressive step: only the unskipped blocks."""
    return (model_cfg.depth - skip_depth) * block_flops(model_cfg)
