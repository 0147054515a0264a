"""Token-partition strategies for conservative caching steps.

Every strategy splits the token index set into two complementary sets: the
tokens to compute this step and the tokens whose branch values are read from
the cache. The computed count is ``max(1, round_half_up((1 - R) * n))`` for
cache ratio R, so at least one token is refreshed per sublayer.

Strategies
----------
random      draw a random score per token; the largest scores are cached
            (equivalently: a uniform random subset is computed)
attn        per-token attention received, averaged over heads and queries;
            needs materialized score matrices, so it is incompatible with
            efficient-attention execution
knorm/vnorm Euclidean norm of the token's key / value row
sim         a small random base set is always computed; the rest are ranked
            by mean cosine similarity to the base tokens

For metric strategies, direction `max` computes the highest-scoring tokens
and `min` the lowest-scoring. Ties always break toward the lower index.
Scoring is not FLOPs-metered; it is outside the model's compute budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CapabilityError, ConfigError
from .tensor_core import Tensor

KIND_RANDOM = "random"
KIND_ATTENTION = "attn"
KIND_KNORM = "knorm"
KIND_VNORM = "vnorm"
KIND_SIMILARITY = "sim"

DIRECTION_MAX = "max"
DIRECTION_MIN = "min"

STRATEGY_NAMES = (
    "random",
    "attn-max", "attn-min",
    "knorm-max", "knorm-min",
    "vnorm-max", "vnorm-min",
    "sim-max", "sim-min",
)

DEFAULT_BASE_FRACTION = 0.01


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def compute_count(n: int, ratio: float) -> int:
    """Tokens computed per sublayer at cache ratio `ratio` (floor of 1)."""
    return max(1, round_half_up((1.0 - ratio) * n))


@dataclass(frozen=True)
class SelectionStrategy:
    kind: str
    direction: str = DIRECTION_MAX
    base_fraction: float = DEFAULT_BASE_FRACTION

    @property
    def needs_scores(self) -> bool:
        return self.kind == KIND_ATTENTION

    @property
    def name(self) -> str:
        if self.kind == KIND_RANDOM:
            return KIND_RANDOM
        return f"{self.kind}-{self.direction}"


def parse_strategy(name: str) -> SelectionStrategy:
    if name == KIND_RANDOM:
        return SelectionStrategy(KIND_RANDOM)
    if name not in STRATEGY_NAMES:
        raise ConfigError(
            f"unknown strategy {name!r}; expected one of {', '.join(STRATEGY_NAMES)}")
    kind, direction = name.rsplit("-", 1)
    return SelectionStrategy(kind, direction)


@dataclass(frozen=True)
class TokenPartition:
    """Complementary index sets: computed tokens and cached tokens."""

    compute_idx: np.ndarray
    cache_idx: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "compute_idx", np.sort(np.asarray(self.compute_idx, dtype=np.intp)))
        object.__setattr__(self, "cache_idx", np.sort(np.asarray(self.cache_idx, dtype=np.intp)))

    @property
    def n(self) -> int:
        return self.compute_idx.size + self.cache_idx.size


@dataclass(frozen=True)
class SelectionContext:
    """Per-sublayer inputs a strategy may score from."""

    hidden: np.ndarray
    keys: np.ndarray | None = None
    values: np.ndarray | None = None
    scores: np.ndarray | None = None


def _as_nd(x) -> np.ndarray:
    return x.numpy() if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def score_knorm(keys) -> np.ndarray:
    """Euclidean norm of each token's key row."""
    return np.linalg.norm(_as_nd(keys), axis=-1)


def score_vnorm(values) -> np.ndarray:
    """Euclidean norm of each token's value row."""
    return np.linalg.norm(_as_nd(values), axis=-1)


def score_attention(scores) -> np.ndarray:
    """Attention received per token: mean over heads and queries of its column."""
    a = _as_nd(scores)
    return a.mean(axis=(0, 1))


def _partition_from_order(order: np.ndarray, k: int) -> TokenPartition:
    return TokenPartition(compute_idx=order[:k], cache_idx=order[k:])


def _directional_partition(scores: np.ndarray, k: int, direction: str) -> TokenPartition:
    if direction == DIRECTION_MAX:
        order = np.argsort(-scores, kind="stable")
    elif direction == DIRECTION_MIN:
        order = np.argsort(scores, kind="stable")
    else:
        raise ConfigError(f"unknown direction {direction!r}")
    return _partition_from_order(order, k)


def _check_ratio(ratio: float) -> None:
    if not 0.0 <= ratio < 1.0:
        raise ConfigError(f"cache ratio must be in [0, 1), got {ratio}")


def similarity_partition(hidden, ratio: float, base_fraction: float,
                         direction: str, rng: np.random.Generator) -> TokenPartition:
    """Base tokens are a random always-computed seed set; the remaining
    computed slots go to the tokens most (max) or least (min) similar to
    that base on average."""
    _check_ratio(ratio)
    if base_fraction >= (1.0 - ratio):
        raise ConfigError(
            f"base_fraction {base_fraction} must be below the computed fraction {1.0 - ratio}")
    h = _as_nd(hidden)
    n = h.shape[0]
    k = compute_count(n, ratio)
    base_count = max(1, round_half_up(base_fraction * n))
    base = np.sort(rng.choice(n, size=base_count, replace=False))
    rest = np.setdiff1d(np.arange(n), base, assume_unique=False)

    norms = np.linalg.norm(h, axis=1)
    safe = np.where(norms == 0.0, 1.0, norms)
    unit = h / safe[:, None]
    # zero rows score 0 against everything, matching cosine_similarity
    sims = unit[rest] @ unit[base].T
    mean_sim = sims.mean(axis=1)

    need = k - base_count
    if direction == DIRECTION_MAX:
        order = rest[np.argsort(-mean_sim, kind="stable")]
    elif direction == DIRECTION_MIN:
        order = rest[np.argsort(mean_sim, kind="stable")]
    else:
        raise ConfigError(f"unknown direction {direction!r}")
    compute = np.concatenate([base, order[:need]])
    cache = order[need:]
    return TokenPartition(compute_idx=compute, cache_idx=cache)


def select(strategy: SelectionStrategy, ctx: SelectionContext, ratio: float,
           rng: np.random.Generator) -> TokenPartition:
    """Partition tokens for one sublayer. Draws fresh per call, so each
    (block, sublayer) gets an independent split."""
    _check_ratio(ratio)
    n = ctx.hidden.shape[0]
    k = compute_count(n, ratio)

    if strategy.kind == KIND_RANDOM:
        scores = rng.random(n)
        # largest random scores are cached; the rest are computed
        order = np.argsort(scores, kind="stable")
        return _partition_from_order(order, k)
    if strategy.kind == KIND_ATTENTION:
        if ctx.scores is None:
            raise CapabilityError(
                "attention-score selection needs materialized attention scores, "
                "which efficient-attention mode never provides")
        return _directional_partition(score_attention(ctx.scores), k, strategy.direction)
    if strategy.kind == KIND_KNORM:
        return _directional_partition(score_knorm(ctx.keys), k, strategy.direction)
    if strategy.kind == KIND_VNORM:
        return _directional_partition(score_vnorm(ctx.values), k, strategy.direction)
    if strategy.kind == KIND_SIMILARITY:
        return similarity_partition(ctx.hidden, ratio, strategy.base_fraction,
                                    strategy.direction, rng)
    raise ConfigError(f"unknown strategy kind {strategy.kind!r}")
