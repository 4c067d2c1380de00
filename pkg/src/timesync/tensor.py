"""Dense float64 tensors with reverse-mode gradient accumulation.

Storage is a numpy array per tensor; every differentiable op wires a
backward closure into a tape that backward() replays in reverse
topological order. Everything runs in 64-bit so finite-difference checks
can be held to tight tolerances.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import kernels


class ShapeError(ValueError):
    pass


class GraphError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operators used in tests and small expressions
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_node(data: np.ndarray, parents: Sequence[Tensor],
              backward: Callable[[np.ndarray], None]) -> Tensor:
    """Create a graph node; the tape is only kept if some parent needs grads."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient g down to `shape` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return make_node(out_data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return make_node(out_data, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def backward(g):
        _accumulate(a, g * c)

    return make_node(a.data * c, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim < 2 or b.data.ndim < 2 or a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(
            f"matmul: inner dimensions do not match for shapes "
            f"{tuple(a.data.shape)} and {tuple(b.data.shape)}")
    out_data = a.data @ b.data

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        _accumulate(a, _unbroadcast(ga, a.data.shape))
        _accumulate(b, _unbroadcast(gb, b.data.shape))

    return make_node(out_data, (a, b), backward)


def relu(x: Tensor) -> Tensor:
    out_data = np.maximum(x.data, 0.0)

    def backward(g):
        _accumulate(x, g * (x.data > 0.0))

    return make_node(out_data, (x,), backward)


def tsum(x: Tensor) -> Tensor:
    def backward(g):
        _accumulate(x, np.full_like(x.data, float(g)))

    return make_node(np.asarray(x.data.sum()), (x,), backward)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    def backward(g):
        _accumulate(x, g.reshape(x.data.shape))

    return make_node(x.data.reshape(shape), (x,), backward)


def concat_lastdim(a: Tensor, b: Tensor) -> Tensor:
    na = a.data.shape[-1]
    out_data = np.concatenate([a.data, b.data], axis=-1)

    def backward(g):
        _accumulate(a, g[..., :na])
        _accumulate(b, np.ascontiguousarray(g[..., na:]))

    return make_node(out_data, (a, b), backward)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of `table`; out[i] = table[ids[i]]."""
    ids = np.asarray(ids, dtype=np.intp)
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise IndexError(
            f"embedding: id out of range for table with {table.data.shape[0]} rows")
    out_data = table.data[ids]

    def backward(g):
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, ids, g)

    return make_node(out_data, (table,), backward)


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when rate == 0."""
    if rate <= 0.0:
        return x
    keep = (rng.random(x.data.shape) >= rate) / (1.0 - rate)

    def backward(g):
        _accumulate(x, g * keep)

    return make_node(x.data * keep, (x,), backward)


# ---------------------------------------------------------------------------
# normalization / softmax / loss
# ---------------------------------------------------------------------------

def softmax_lastdim(x: Tensor) -> Tensor:
    """Softmax over the last axis.

    -inf entries act as a mask sentinel (zero weight); rows that are
    entirely -inf come back all-zero instead of NaN.
    """
    d = x.data
    peak = d.max(axis=-1, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    e = np.exp(d - peak)
    total = e.sum(axis=-1, keepdims=True)
    out_data = e / np.where(total > 0.0, total, 1.0)

    def backward(g):
        inner = np.sum(out_data * g, axis=-1, keepdims=True)
        _accumulate(x, out_data * (g - inner))

    return make_node(out_data, (x,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-slice normalization over the last axis, then affine."""
    d = x.data.shape[-1]
    if d < 2:
        raise ShapeError(f"layer_norm: last dimension must be >= 2, got {d}")
    x2 = x.data.reshape(-1, d)
    y2, mean, inv_std = kernels.layer_norm_forward(x2, gain.data, bias.data, eps)

    def backward(g):
        g2 = np.ascontiguousarray(g.reshape(-1, d))
        dx, dgain, dbias = kernels.layer_norm_backward(g2, x2, mean, inv_std, gain.data)
        _accumulate(x, dx.reshape(x.data.shape))
        _accumulate(gain, dgain)
        _accumulate(bias, dbias)

    return make_node(y2.reshape(x.data.shape), (x, gain, bias), backward)


IGNORE_INDEX = -1


def cross_entropy(logits: Tensor, targets: np.ndarray,
                  ignore_index: int = IGNORE_INDEX) -> Tensor:
    """Mean negative log-softmax probability of targets.

    Positions whose target equals ignore_index do not contribute. Returns a
    scalar tensor.
    """
    targets = np.asarray(targets, dtype=np.intp)
    n, c = logits.data.shape
    valid = targets != ignore_index
    count = int(valid.sum())
    if count == 0:
        raise ValueError("cross_entropy: no supervised positions in batch")
    tv = targets[valid]
    if tv.min() < 0 or tv.max() >= c:
        raise IndexError(
            f"cross_entropy: target index out of range for {c} classes")
    z = logits.data
    peak = z.max(axis=-1, keepdims=True)
    e = np.exp(z - peak)
    total = e.sum(axis=-1, keepdims=True)
    log_total = np.log(total) + peak
    nll = log_total[valid, 0] - z[valid, tv]
    loss = nll.sum() / count

    def backward(g):
        probs = e / total
        dz = np.zeros_like(z)
        dz[valid] = probs[valid]
        dz[valid, tv] -= 1.0
        dz *= float(g) / count
        _accumulate(logits, dz)

    return make_node(np.asarray(loss), (logits,), backward)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def backward(loss: Tensor) -> None:
    """Populate .grad on every requires_grad tensor reachable from `loss`."""
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise GraphError(
            f"backward: expected a scalar loss, got shape {tuple(loss.data.shape)}")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
