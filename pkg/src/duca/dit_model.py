"""Toy diffusion transformer with residual-plus-AdaLN sublayers.

The model is a stack of ``depth`` blocks, each applying a self-attention
sublayer followed by an MLP sublayer. A sublayer contributes a *branch*
value that is added to the running hidden state:

    x  <-  x + (1 + gate) * (layer_norm(f(x)) * (1 + scale) + shift)

where ``f`` is the attention or MLP map and (shift, scale, gate) are
per-channel vectors projected from the conditioning embedding. The branch
term (everything except the residual ``x``) is exactly the quantity the
cache engine stores and substitutes, so it is computed by a dedicated
function and never fused into the residual add.

Modulation projections are zero-initialized, so a freshly seeded model
modulates with unit scale, zero shift, and unit gate: every branch starts
as the plain row-normalization of f(x). Conditioning therefore only shapes
the output once non-zero modulation weights are loaded from a weight file.

FLOPs accounting covers block compute only (attention, MLP, AdaLN including
its modulation projections). Residual adds, the conditioning embedding, and
positional offsets are uncounted; see `forward_flops` for the closed form.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor_core import (
    FlopsMeter,
    Tensor,
    add_nd,
    gelu_nd,
    layer_norm_nd,
    matmul_nd,
    mul_nd,
    softmax_rows_nd,
)

SUBLAYER_SA = "sa"
SUBLAYER_MLP = "mlp"
SUBLAYERS = (SUBLAYER_SA, SUBLAYER_MLP)

_SINUSOID_BASE = 10000.0
_INIT_STD = 0.02
_WEIGHT_MAGIC = b"DTW1"


@dataclass(frozen=True)
class ModelConfig:
    """Structural hyperparameters of the toy model."""

    depth: int = 4
    hidden: int = 64
    heads: int = 4
    tokens: int = 64
    classes: int = 10
    mlp_ratio: float = 4.0
    max_timesteps: int = 1000

    @property
    def mlp_hidden(self) -> int:
        return int(round(self.mlp_ratio * self.hidden))

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads

    def validate(self) -> None:
        problems = []
        if self.depth < 2:
            problems.append(f"depth must be >= 2 (block skipping needs a computed suffix), got {self.depth}")
        if self.hidden < 2:
            problems.append(f"hidden must be >= 2, got {self.hidden}")
        elif self.hidden % 2 != 0:
            problems.append(f"hidden must be even for the sin/cos embedding split, got {self.hidden}")
        if self.heads < 1:
            problems.append(f"heads must be >= 1, got {self.heads}")
        elif self.hidden >= 2 and self.hidden % self.heads != 0:
            problems.append(f"hidden ({self.hidden}) must be divisible by heads ({self.heads})")
        if self.tokens < 1:
            problems.append(f"tokens must be >= 1, got {self.tokens}")
        if self.classes < 1:
            problems.append(f"classes must be >= 1, got {self.classes}")
        if not self.mlp_ratio > 0:
            problems.append(f"mlp_ratio must be positive, got {self.mlp_ratio}")
        if self.max_timesteps < 1:
            problems.append(f"max_timesteps must be >= 1, got {self.max_timesteps}")
        if problems:
            raise ConfigError("invalid model config: " + "; ".join(problems))


@dataclass(frozen=True)
class BlockWeights:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    mod_sa_w: np.ndarray
    mod_sa_b: np.ndarray
    mod_mlp_w: np.ndarray
    mod_mlp_b: np.ndarray


@dataclass(frozen=True)
class DiTModel:
    """Immutable weight container; safe to share read-only across runs."""

    config: ModelConfig
    blocks: tuple[BlockWeights, ...]
    wt1: np.ndarray
    bt1: np.ndarray
    wt2: np.ndarray
    bt2: np.ndarray
    class_table: np.ndarray
    time_table: np.ndarray
    pos_encoding: np.ndarray

    def weight_arrays(self) -> list[np.ndarray]:
        """Learned weights in the documented serialization order."""
        out: list[np.ndarray] = []
        for b in self.blocks:
            out.extend([b.wq, b.wk, b.wv, b.wo, b.w1, b.b1, b.w2, b.b2,
                        b.mod_sa_w, b.mod_sa_b, b.mod_mlp_w, b.mod_mlp_b])
        out.extend([self.wt1, self.bt1, self.wt2, self.bt2, self.class_table])
        return out


@dataclass(frozen=True)
class BranchOutput:
    """A sublayer's non-residual branch plus optional attachments.

    `attention_scores` is populated only when score exposure was requested;
    keys/values only for self-attention sublayers.
    """

    value: Tensor
    attention_scores: Tensor | None = None
    keys: Tensor | None = None
    values: Tensor | None = None


def _sinusoid_table(count: int, dim: int) -> np.ndarray:
    half = dim // 2
    idx = np.arange(count, dtype=np.float64)[:, None]
    freqs = _SINUSOID_BASE ** (-np.arange(half, dtype=np.float64) / half)
    angles = idx * freqs[None, :]
    table = np.concatenate([np.sin(angles), np.cos(angles)], axis=1)
    table.flags.writeable = False
    return table


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


def init_model(seed: int, cfg: ModelConfig) -> DiTModel:
    """Build a model fully determined by (seed, cfg).

    Projection weights are N(0, 0.02^2); all biases and every modulation
    projection are zero. Draw order is fixed: per block wq, wk, wv, wo,
    w1, w2; then the two conditioning MLP weights; then the class table.
    """
    cfg.validate()
    rng = np.random.default_rng(seed)
    d, m = cfg.hidden, cfg.mlp_hidden

    def draw(*shape: int) -> np.ndarray:
        return _frozen(rng.normal(0.0, _INIT_STD, size=shape))

    blocks = []
    for _ in range(cfg.depth):
        blocks.append(BlockWeights(
            wq=draw(d, d), wk=draw(d, d), wv=draw(d, d), wo=draw(d, d),
            w1=draw(d, m), b1=_frozen(np.zeros(m)),
            w2=draw(m, d), b2=_frozen(np.zeros(d)),
            mod_sa_w=_frozen(np.zeros((d, 3 * d))), mod_sa_b=_frozen(np.zeros(3 * d)),
            mod_mlp_w=_frozen(np.zeros((d, 3 * d))), mod_mlp_b=_frozen(np.zeros(3 * d)),
        ))
    return DiTModel(
        config=cfg,
        blocks=tuple(blocks),
        wt1=draw(d, d), bt1=_frozen(np.zeros(d)),
        wt2=draw(d, d), bt2=_frozen(np.zeros(d)),
        class_table=draw(cfg.classes, d),
        time_table=_sinusoid_table(cfg.max_timesteps, d),
        pos_encoding=_sinusoid_table(cfg.tokens, d),
    )


# ---------------------------------------------------------------------------
# Conditioning
# ---------------------------------------------------------------------------


def embed_condition_nd(model: DiTModel, t: int, c: int) -> np.ndarray:
    cfg = model.config
    if not 0 <= t < cfg.max_timesteps:
        raise IndexError(f"timestep {t} outside embedding table [0, {cfg.max_timesteps})")
    if not 0 <= c < cfg.classes:
        raise IndexError(f"class {c} outside table [0, {cfg.classes})")
    e = model.time_table[t][None, :]
    h = gelu_nd(matmul_nd(e, model.wt1) + model.bt1)
    t_emb = (matmul_nd(h, model.wt2) + model.bt2)[0]
    return t_emb + model.class_table[c]


def embed_condition(t: int, c: int, model: DiTModel) -> Tensor:
    """Timestep sinusoid through a 2-layer MLP, plus the learned class row.

    Uncounted by the FLOPs meter; see the module docstring.
    """
    return Tensor._wrap(embed_condition_nd(model, t, c))


# ---------------------------------------------------------------------------
# Sublayer computation. `rows=None` means all tokens; otherwise only the
# given token rows are computed, with keys/values assembled from the caller's
# cached full-length tensors (mixed-freshness attention).
# ---------------------------------------------------------------------------


@dataclass
class BranchRows:
    value: np.ndarray
    k_new: np.ndarray | None = None
    v_new: np.ndarray | None = None
    k_full: np.ndarray | None = None
    v_full: np.ndarray | None = None
    scores: np.ndarray | None = None


def _modulation(w: np.ndarray, b: np.ndarray, cond: np.ndarray,
                meter: FlopsMeter | None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    d = cond.shape[0]
    mod = add_nd(matmul_nd(cond[None, :], w, meter), b, meter)[0]
    shift, scale, gate = mod[:d], mod[d:2 * d], mod[2 * d:]
    one_scale = add_nd(1.0, scale, meter)
    one_gate = add_nd(1.0, gate, meter)
    return shift, one_scale, one_gate


def _adaln_apply(f_rows: np.ndarray, shift, one_scale, one_gate,
                 meter: FlopsMeter | None) -> np.ndarray:
    out = mul_nd(layer_norm_nd(f_rows, meter), one_scale, meter)
    out = add_nd(out, shift, meter)
    return mul_nd(out, one_gate, meter)


def _attention_rows(bw: BlockWeights, heads: int, h: np.ndarray,
                    rows: np.ndarray | None,
                    k_cache: np.ndarray | None, v_cache: np.ndarray | None,
                    meter: FlopsMeter | None, expose: bool) -> BranchRows:
    n, d = h.shape
    dh = d // heads
    if rows is None:
        xq = h
        k_new = matmul_nd(h, bw.wk, meter)
        v_new = matmul_nd(h, bw.wv, meter)
        k_full, v_full = k_new, v_new
    else:
        xq = h[rows]
        k_new = matmul_nd(xq, bw.wk, meter)
        v_new = matmul_nd(xq, bw.wv, meter)
        k_full = k_cache.copy()
        v_full = v_cache.copy()
        k_full[rows] = k_new
        v_full[rows] = v_new
    q = matmul_nd(xq, bw.wq, meter)
    c = q.shape[0]
    q_h = q.reshape(c, heads, dh).transpose(1, 0, 2)
    k_h = k_full.reshape(n, heads, dh).transpose(1, 0, 2)
    v_h = v_full.reshape(n, heads, dh).transpose(1, 0, 2)
    scores = np.empty((heads, c, n))
    for i in range(heads):
        scores[i] = matmul_nd(q_h[i], k_h[i].T, meter)
    scores = mul_nd(scores, 1.0 / np.sqrt(dh), meter)
    probs = softmax_rows_nd(scores, meter)
    ctx = np.empty((heads, c, dh))
    for i in range(heads):
        ctx[i] = matmul_nd(probs[i], v_h[i], meter)
    value = matmul_nd(ctx.transpose(1, 0, 2).reshape(c, d), bw.wo, meter)
    return BranchRows(value=value, k_new=k_new, v_new=v_new,
                      k_full=k_full, v_full=v_full,
                      scores=probs if expose else None)


def _mlp_rows(bw: BlockWeights, h_rows: np.ndarray, meter: FlopsMeter | None) -> np.ndarray:
    a = add_nd(matmul_nd(h_rows, bw.w1, meter), bw.b1, meter)
    return add_nd(matmul_nd(gelu_nd(a, meter), bw.w2, meter), bw.b2, meter)


def sublayer_branch_rows(model: DiTModel, l: int, s: str, h: np.ndarray,
                         cond: np.ndarray, meter: FlopsMeter | None = None,
                         expose_scores: bool = False,
                         rows: np.ndarray | None = None,
                         k_cache: np.ndarray | None = None,
                         v_cache: np.ndarray | None = None) -> BranchRows:
    """ndarray-level branch computation shared with the cache engine."""
    if not 0 <= l < model.config.depth:
        raise IndexError(f"block index {l} outside [0, {model.config.depth})")
    if s not in SUBLAYERS:
        raise IndexError(f"unknown sublayer {s!r}, expected one of {SUBLAYERS}")
    bw = model.blocks[l]
    if s == SUBLAYER_SA:
        mods = _modulation(bw.mod_sa_w, bw.mod_sa_b, cond, meter)
        out = _attention_rows(bw, model.config.heads, h, rows, k_cache, v_cache,
                              meter, expose_scores)
        out.value = _adaln_apply(out.value, *mods, meter)
        return out
    mods = _modulation(bw.mod_mlp_w, bw.mod_mlp_b, cond, meter)
    rows_in = h if rows is None else h[rows]
    value = _adaln_apply(_mlp_rows(bw, rows_in, meter), *mods, meter)
    return BranchRows(value=value)


def attention(x: Tensor, block_weights: BlockWeights, expose_scores: bool = False,
              meter: FlopsMeter | None = None, heads: int = 1) -> BranchOutput:
    """Multi-head scaled dot-product self-attention over all tokens.

    Keys/values are always retained for caching; the score matrix is kept
    only when `expose_scores` is set (efficient-attention mode never
    materializes it for the caller).
    """
    h = x.numpy()
    if h.ndim != 2 or h.shape[1] % heads != 0:
        raise ShapeError(f"attention input {x.shape} not splittable into {heads} heads")
    bw = block_weights
    out = _attention_rows(bw, heads, h, None, None, None, meter, expose_scores)
    return BranchOutput(
        value=Tensor._wrap(out.value),
        attention_scores=Tensor._wrap(out.scores) if out.scores is not None else None,
        keys=Tensor._wrap(out.k_new),
        values=Tensor._wrap(out.v_new),
    )


def sublayer_branch(model: DiTModel, l: int, s: str, x: Tensor, cond: Tensor,
                    expose_scores: bool = False,
                    meter: FlopsMeter | None = None) -> BranchOutput:
    """The non-residual branch AdaLN(f(x)) of block `l`, sublayer `s`.

    The residual is NOT added here; the cache stores exactly this value.
    """
    out = sublayer_branch_rows(model, l, s, x.numpy(), cond.numpy(), meter,
                               expose_scores)
    return BranchOutput(
        value=Tensor._wrap(out.value),
        attention_scores=Tensor._wrap(out.scores) if out.scores is not None else None,
        keys=Tensor._wrap(out.k_new) if out.k_new is not None else None,
        values=Tensor._wrap(out.v_new) if out.v_new is not None else None,
    )


def forward_full_nd(model: DiTModel, x_t: np.ndarray, t: int, c: int,
                    meter: FlopsMeter | None = None) -> np.ndarray:
    cond = embed_condition_nd(model, t, c)
    h = x_t
    for l in range(model.config.depth):
        for s in SUBLAYERS:
            h = h + sublayer_branch_rows(model, l, s, h, cond, meter).value
    return h


def model_forward_full(model: DiTModel, x_t: Tensor, t: int, c: int,
                       meter: FlopsMeter | None = None) -> Tensor:
    """Predicted noise for latent `x_t`: all blocks, SA then MLP, with residuals."""
    return Tensor._wrap(forward_full_nd(model, x_t.numpy(), t, c, meter))


# ---------------------------------------------------------------------------
# Analytic FLOPs. These mirror the metered code paths above exactly; the
# test suite holds them against an independently hand-derived count.
# ---------------------------------------------------------------------------


def attention_flops(cfg: ModelConfig, rows: int | None = None) -> int:
    n, d, h = cfg.tokens, cfg.hidden, cfg.heads
    c = n if rows is None else rows
    return 8 * c * d * d + 4 * c * n * d + 5 * h * c * n


def mlp_flops(cfg: ModelConfig, rows: int | None = None) -> int:
    n, d, m = cfg.tokens, cfg.hidden, cfg.mlp_hidden
    c = n if rows is None else rows
    return 4 * c * d * m + 10 * c * m + c * d


def adaln_flops(cfg: ModelConfig, rows: int | None = None) -> int:
    """Both sublayers of one block: modulation projections plus application."""
    n, d = cfg.tokens, cfg.hidden
    c = n if rows is None else rows
    return 2 * (6 * d * d + 5 * d + 8 * c * d)


def block_flops(cfg: ModelConfig, rows: int | None = None) -> int:
    return attention_flops(cfg, rows) + mlp_flops(cfg, rows) + adaln_flops(cfg, rows)


def forward_flops(cfg: ModelConfig) -> int:
    """Metered cost of one full forward: depth x (attention + MLP + AdaLN)."""
    return cfg.depth * block_flops(cfg)


# ---------------------------------------------------------------------------
# Weight file format: little-endian; header magic "DTW1" then seven int32
# config fields (depth, hidden, heads, tokens, classes, mlp_hidden,
# max_timesteps); payload float64 weights in weight_arrays() order. The MLP
# ratio is stored via its integer hidden width and reconstructed as
# mlp_hidden / hidden.
# ---------------------------------------------------------------------------


def save_weights(model: DiTModel, path) -> None:
    cfg = model.config
    header = _WEIGHT_MAGIC + struct.pack(
        "<7i", cfg.depth, cfg.hidden, cfg.heads, cfg.tokens, cfg.classes,
        cfg.mlp_hidden, cfg.max_timesteps)
    with open(path, "wb") as f:
        f.write(header)
        for a in model.weight_arrays():
            f.write(a.astype("<f8", copy=False).tobytes())


def load_weights(path) -> DiTModel:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != _WEIGHT_MAGIC:
        raise ConfigError(f"not a weight file: bad magic {raw[:4]!r}")
    depth, d, heads, n, classes, m, max_t = struct.unpack_from("<7i", raw, 4)
    if d <= 0 or m % max(d, 1) != 0:
        raise ConfigError(f"weight header mlp width {m} not a multiple of hidden {d}")
    cfg = ModelConfig(depth=depth, hidden=d, heads=heads, tokens=n,
                      classes=classes, mlp_ratio=m / d, max_timesteps=max_t)
    cfg.validate()
    shapes = []
    for _ in range(depth):
        shapes.extend([(d, d)] * 4 + [(d, m), (m,), (m, d), (d,),
                       (d, 3 * d), (3 * d,), (d, 3 * d), (3 * d,)])
    shapes.extend([(d, d), (d,), (d, d), (d,), (classes, d)])
    need = sum(int(np.prod(s)) for s in shapes)
    payload = np.frombuffer(raw, dtype="<f8", offset=4 + 28)
    if payload.size != need:
        raise ConfigError(f"weight payload holds {payload.size} values, expected {need}")
    arrays = []
    pos = 0
    for s in shapes:
        cnt = int(np.prod(s))
        arrays.append(_frozen(payload[pos:pos + cnt].reshape(s)))
        pos += cnt
    per_block = 12
    blocks = tuple(
        BlockWeights(*arrays[i * per_block:(i + 1) * per_block]) for i in range(depth)
    )
    wt1, bt1, wt2, bt2, class_table = arrays[depth * per_block:]
    return DiTModel(config=cfg, blocks=blocks, wt1=wt1, bt1=bt1, wt2=wt2, bt2=bt2,
                    class_table=class_table,
                    time_table=_sinusoid_table(max_t, d),
                    pos_encoding=_sinusoid_table(n, d))
