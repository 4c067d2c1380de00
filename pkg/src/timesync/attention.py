"""Attention with relative-time score biases and time-based causal masks.

Scores get slope * g(t_query - t_key) added before softmax, so recent keys
win when content ties; masks are computed from timestamps, not positions,
which is what lets one sequence interleave events from streams sampled at
wholly different rates. The -inf timestamp marks the always-attendable
start sentinel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .tensor import ShapeError, Tensor, _accumulate, make_node

DELTA_TRANSFORMS = ("linear", "log1p")


def default_slopes(n_heads: int) -> np.ndarray:
    """Geometric per-head slopes -2^(-8h/H), h = 1..H."""
    h = np.arange(1, n_heads + 1, dtype=np.float64)
    return -np.power(2.0, -8.0 * h / n_heads)


@dataclass
class TimeAliBiConfig:
    n_heads: int = 4
    slopes: np.ndarray = field(default_factory=lambda: default_slopes(4))
    delta_transform: str = "log1p"
    time_unit_seconds: float = 86400.0
    # the reference equation folds the bias into the 1/sqrt(d_k) scaling;
    # True switches to adding it after, for the ablation harness
    bias_after_scale: bool = False

    def __post_init__(self):
        self.slopes = np.asarray(self.slopes, dtype=np.float64)
        if self.slopes.shape != (self.n_heads,):
            raise ValueError(
                f"expected {self.n_heads} slopes, got shape {self.slopes.shape}")
        if not np.all(self.slopes < 0.0):
            raise ValueError("slopes must be strictly negative")
        if len(np.unique(self.slopes)) != self.n_heads:
            raise ValueError("slopes must be distinct across heads")
        if self.delta_transform not in DELTA_TRANSFORMS:
            raise ValueError(f"unknown delta_transform {self.delta_transform!r}")
        if self.time_unit_seconds <= 0:
            raise ValueError("time_unit_seconds must be positive")


def time_delta_matrix(t_q, t_k, delta_transform: str = "linear",
                      time_unit: float = 1.0) -> np.ndarray:
    """g((t_q[i] - t_k[j]) / unit) with non-finite timestamps mapping to 0."""
    t_q = np.asarray(t_q, dtype=np.float64)
    t_k = np.asarray(t_k, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        dt = np.subtract.outer(t_q, t_k) / float(time_unit)
    dt = np.where(np.isfinite(dt), dt, 0.0)
    if delta_transform == "log1p":
        dt = np.sign(dt) * np.log1p(np.abs(dt))
    elif delta_transform != "linear":
        raise ValueError(f"unknown delta_transform {delta_transform!r}")
    return dt


def time_alibi_bias(t_q, t_k, slope: float, delta_transform: str = "linear",
                    time_unit: float = 1.0) -> np.ndarray:
    """Additive attention-score bias slope * g(time delta)."""
    return float(slope) * time_delta_matrix(t_q, t_k, delta_transform, time_unit)


def temporal_causal_mask(t_q, t_k, strict: bool) -> np.ndarray:
    """allowed[i, j] = key j is attendable from query i.

    Inclusive (t_k <= t_q) for self-attention, strict (t_k < t_q) for
    decoder-to-encoder cross-attention. The -inf sentinel key is always
    allowed so no row ends up empty.
    """
    t_q = np.asarray(t_q, dtype=np.float64)
    t_k = np.asarray(t_k, dtype=np.float64)
    if strict:
        allowed = t_k[None, :] < t_q[:, None]
    else:
        allowed = t_k[None, :] <= t_q[:, None]
    return allowed | np.isneginf(t_k)[None, :]


def multihead_attend(q: Tensor, k: Tensor, v: Tensor, *, n_heads: int,
                     delta: np.ndarray | None = None,
                     slopes: np.ndarray | None = None,
                     mask: np.ndarray | None = None,
                     bias_after_scale: bool = False) -> Tensor:
    """Fused scaled-dot-product attention over heads split from the last dim.

    q: [n_q, d]; k, v: [n_k, d]. delta is a shared [n_q, n_k] time matrix,
    biased per head by slopes[h]; mask is boolean [n_q, n_k]. Gradients flow
    to q, k, v only (bias and mask are data-derived constants).
    """
    nq, d = q.data.shape
    nk = k.data.shape[0]
    if d % n_heads != 0:
        raise ShapeError(f"model dim {d} not divisible by {n_heads} heads")
    if k.data.shape != (nk, d) or v.data.shape != (nk, d):
        raise ShapeError(
            f"attend: inconsistent shapes q={q.data.shape} k={k.data.shape} "
            f"v={v.data.shape}")
    if delta is not None:
        delta = np.ascontiguousarray(delta, dtype=np.float64)
        if delta.shape != (nq, nk):
            raise ShapeError(
                f"attend: bias shape {delta.shape} does not match ({nq}, {nk})")
        slopes = np.ascontiguousarray(slopes, dtype=np.float64)
        if slopes.shape != (n_heads,):
            raise ShapeError(f"attend: need {n_heads} slopes, got {slopes.shape}")
    mask_u8 = None
    if mask is not None:
        if mask.shape != (nq, nk):
            raise ShapeError(
                f"attend: mask shape {mask.shape} does not match ({nq}, {nk})")
        mask_u8 = np.ascontiguousarray(mask.astype(np.uint8))

    dh = d // n_heads
    inv = 1.0 / np.sqrt(dh)
    q3 = np.ascontiguousarray(q.data.reshape(nq, n_heads, dh).transpose(1, 0, 2))
    k3 = np.ascontiguousarray(k.data.reshape(nk, n_heads, dh).transpose(1, 0, 2))
    v3 = np.ascontiguousarray(v.data.reshape(nk, n_heads, dh).transpose(1, 0, 2))
    scores = q3 @ k3.transpose(0, 2, 1)
    weights = kernels.bias_mask_softmax(scores, delta, slopes, mask_u8, inv,
                                        bias_after_scale)
    out = np.ascontiguousarray((weights @ v3).transpose(1, 0, 2)).reshape(nq, d)

    def backward(g):
        g3 = np.ascontiguousarray(g.reshape(nq, n_heads, dh).transpose(1, 0, 2))
        gw = g3 @ v3.transpose(0, 2, 1)
        gs = kernels.masked_softmax_backward(weights, gw, inv)
        gq = (gs @ k3).transpose(1, 0, 2).reshape(nq, d)
        gk = (gs.transpose(0, 2, 1) @ q3).transpose(1, 0, 2).reshape(nk, d)
        gv = (weights.transpose(0, 2, 1) @ g3).transpose(1, 0, 2).reshape(nk, d)
        _accumulate(q, gq)
        _accumulate(k, gk)
        _accumulate(v, gv)

    return make_node(out, (q, k, v), backward)


def attend(q: Tensor, k: Tensor, v: Tensor, bias: np.ndarray | None = None,
           mask: np.ndarray | None = None,
           bias_after_scale: bool = False) -> Tensor:
    """Single-head attention with an explicit additive score bias."""
    slopes = None if bias is None else np.array([1.0])
    return multihead_attend(q, k, v, n_heads=1, delta=bias, slopes=slopes,
                            mask=mask, bias_after_scale=bias_after_scale)


def multi_head(q_in: Tensor, k_in: Tensor, v_in: Tensor, t_q, t_k,
               config: TimeAliBiConfig, strict: bool,
               wq: Tensor, wk: Tensor, wv: Tensor, wo: Tensor,
               time_bias: bool = True) -> Tensor:
    """Projected multi-head attention between two timestamped sequences."""
    from .tensor import matmul  # local import to avoid cycle at module load

    delta = None
    slopes = None
    if time_bias:
        delta = time_delta_matrix(t_q, t_k, config.delta_transform,
                                  config.time_unit_seconds)
        slopes = config.slopes
    mask = temporal_causal_mask(t_q, t_k, strict)
    out = multihead_attend(matmul(q_in, wq), matmul(k_in, wk), matmul(v_in, wv),
                           n_heads=config.n_heads, delta=delta, slopes=slopes,
                           mask=mask, bias_after_scale=config.bias_after_scale)
    return matmul(out, wo)
