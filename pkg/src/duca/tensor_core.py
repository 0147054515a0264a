"""Minimal dense-tensor math with an attached FLOPs meter.

Everything downstream (model, cache engine, sampler) builds on the handful of
operations here. Values are float64 throughout so oracle comparisons in the
test suite stay tight; this library verifies numerics and accounting, not
kernel speed.

FLOPs convention
----------------
A multiply-add inside a matrix product counts as 2 FLOPs, so
``matmul(m x k, k x n)`` costs exactly ``2*m*k*n``. The remaining operations
are charged per element with fixed constants:

====================  ==============================================  =====
operation             per-element breakdown                           cost
====================  ==============================================  =====
softmax_rows          max-subtract 1, exp 1, sum-accumulate 1, div 1    4
layer_norm            mean-acc 1, center 1, square 1, var-acc 1, div 1  5
gelu                  cubic 3, inner affine 2, tanh 1, outer affine 3   9
elementwise add/mul   one op per element                                1
====================  ==============================================  =====

Row-level scalars (the max itself, the eps-add, the sqrt) are not charged.
All metered code paths funnel through this module, so a composite
expression's meter total is the sum of the analytic counts of its parts.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DegenerateInputError, NumericError, ShapeError

SOFTMAX_FLOPS_PER_ELEM = 4
LAYER_NORM_FLOPS_PER_ELEM = 5
GELU_FLOPS_PER_ELEM = 9

LAYER_NORM_EPS = 1e-5

_GELU_C = math.sqrt(2.0 / math.pi)


class FlopsMeter:
    """Monotone counter of floating-point operations for one run.

    A meter belongs to exactly one run; reset only at run boundaries.
    """

    __slots__ = ("total",)

    def __init__(self) -> None:
        self.total = 0

    def add(self, count: int) -> None:
        if count < 0:
            raise ValueError(f"FLOPs increment must be non-negative, got {count}")
        self.total += int(count)

    def reset(self) -> None:
        self.total = 0

    def __repr__(self) -> str:
        return f"FlopsMeter(total={self.total})"


class Tensor:
    """Immutable dense float64 array with shape metadata.

    Construction validates that every element is finite, so any public
    operation that returns a Tensor re-establishes the no-NaN/Inf invariant.
    """

    __slots__ = ("_a",)

    def __init__(self, values, shape: tuple[int, ...] | None = None) -> None:
        a = np.array(values, dtype=np.float64, order="C")
        if shape is not None:
            if math.prod(shape) != a.size:
                raise ShapeError(
                    f"cannot view {a.size} elements as shape {tuple(shape)}"
                )
            a = a.reshape(shape)
        if not np.all(np.isfinite(a)):
            raise NumericError("tensor contains non-finite elements")
        a.flags.writeable = False
        self._a = a

    @classmethod
    def _wrap(cls, a: np.ndarray) -> "Tensor":
        """Wrap a freshly computed array without copying."""
        t = object.__new__(cls)
        a = np.ascontiguousarray(a, dtype=np.float64)
        if not np.all(np.isfinite(a)):
            raise NumericError("tensor contains non-finite elements")
        a.flags.writeable = False
        t._a = a
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self._a.shape

    @property
    def size(self) -> int:
        return self._a.size

    @property
    def data(self) -> np.ndarray:
        """Row-major flat view of the elements (read-only)."""
        return self._a.reshape(-1)

    def numpy(self) -> np.ndarray:
        """Read-only ndarray view of the data."""
        return self._a

    def tolist(self):
        return self._a.tolist()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


def _as_array(x) -> np.ndarray:
    return x.numpy() if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


# ---------------------------------------------------------------------------
# ndarray kernels. The model and cache engine call these directly; the public
# Tensor API below wraps them. Keeping them in one place keeps the FLOPs
# accounting single-sourced.
# ---------------------------------------------------------------------------


def matmul_nd(a: np.ndarray, b: np.ndarray, meter: FlopsMeter | None = None) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul dimension mismatch: {tuple(a.shape)} x {tuple(b.shape)}"
        )
    if meter is not None:
        m, k = a.shape
        n = b.shape[1]
        meter.add(2 * m * k * n)
    return a @ b


def softmax_rows_nd(a: np.ndarray, meter: FlopsMeter | None = None) -> np.ndarray:
    shifted = a - a.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)
    if meter is not None:
        meter.add(SOFTMAX_FLOPS_PER_ELEM * a.size)
    return out

def layer_norm_nd(x: np.ndarray, meter: FlopsMeter | None = None) -> np.ndarray:
    if x.shape[-1] < 2:
        raise DegenerateInputError(
            f"layer_norm needs at least 2 features per row, got {x.shape[-1]}"
        )
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    out = centered / np.sqrt(var + LAYER_NORM_EPS)
    if meter is not None:
        meter.add(LAYER_NORM_FLOPS_PER_ELEM * x.size)
    return out


def gelu_nd(x: np.ndarray, meter: FlopsMeter | None = None) -> np.ndarray:
    inner = _GELU_C * (x + 0.044715 * x * x * x)
    out = 0.5 * x * (1.0 + np.tanh(inner))
    if meter is not None:
        meter.add(GELU_FLOPS_PER_ELEM * x.size)
    return out


def add_nd(a: np.ndarray, b: np.ndarray, meter: FlopsMeter | None = None) -> np.ndarray:
    out = a + b
    if meter is not None:
        meter.add(out.size)
    return out


def mul_nd(a: np.ndarray, b: np.ndarray, meter: FlopsMeter | None = None) -> np.ndarray:
    out = a * b
    if meter is not None:
        meter.add(out.size)
    return out


# ---------------------------------------------------------------------------
# Public Tensor operations.
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor, meter: FlopsMeter | None = None) -> Tensor:
    """Matrix product of an m x k and a k x n tensor; meters 2*m*k*n FLOPs."""
    return Tensor._wrap(matmul_nd(_as_array(a), _as_array(b), meter))


def softmax_rows(t: Tensor, meter: FlopsMeter | None = None) -> Tensor:
    """Row-wise softmax with max-subtraction for overflow stability."""
    return Tensor._wrap(softmax_rows_nd(_as_array(t), meter))


def layer_norm(x: Tensor, meter: FlopsMeter | None = None) -> Tensor:
    """Normalize each row to mean 0 / variance 1 (eps 1e-5 in the denominator)."""
    return Tensor._wrap(layer_norm_nd(_as_array(x), meter))


def gelu(x: Tensor, meter: FlopsMeter | None = None) -> Tensor:
    """Elementwise tanh-approximation GELU."""
    return Tensor._wrap(gelu_nd(_as_array(x), meter))


def cosine_similarity(a: Tensor, b: Tensor) -> float:
    """Cosine of the angle between two vectors, in [-1, 1].

    A zero vector paired with anything is defined to score 0.
    """
    va, vb = _as_array(a).reshape(-1), _as_array(b).reshape(-1)
    if va.shape != vb.shape:
        raise ShapeError(
            f"cosine_similarity length mismatch: {va.shape[0]} vs {vb.shape[0]}"
        )
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        return 0.0
    sim = float(va @ vb) / (na * nb)
    return max(-1.0, min(1.0, sim))
