"""Small reverse-mode autodiff over dense float64 numpy arrays.

Only the operations the models need are provided. Every op records its
parents and a closure that pushes the output gradient back to them; calling
``backward()`` on a scalar walks the graph in reverse topological order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix

from .errors import LabelOutOfRange, ShapeMismatch

DTYPE = np.float64


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = (), name: str | None = None):
        arr = np.asarray(data, dtype=DTYPE)
        if arr.ndim > 3:
            raise ShapeMismatch(f"rank {arr.ndim} > 3 not supported")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ShapeMismatch("backward() without a gradient needs a scalar")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            t, done = stack.pop()
            if done:
                order.append(t)
                continue
            if id(t) in seen or not t.requires_grad:
                continue
            seen.add(id(t))
            stack.append((t, True))
            for p in t._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=DTYPE)}
        for t in reversed(order):
            g = grads.pop(id(t), None)
            if g is None:
                continue
            if t._backward is None:  # leaf
                t.grad = g.copy() if t.grad is None else t.grad + g
                continue
            for p, pg in zip(t._parents, t._backward(g)):
                if pg is None or not p.requires_grad:
                    continue
                if id(p) in grads:
                    grads[id(p)] = grads[id(p)] + pg
                else:
                    grads[id(p)] = pg

    # operator sugar
    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(_wrap(other), -1.0))

    def __mul__(self, other):
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents: Sequence[Tensor], backward) -> Tensor:
    req = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=req, _parents=tuple(parents) if req else ())
    if req:
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def index_add(n: int, idx: np.ndarray, values: np.ndarray) -> np.ndarray:
    """out[idx[k]] += values[k] into ``n`` rows, via a sparse 0/1 matrix product."""
    flat = values.reshape(len(idx), -1)
    m = csr_matrix((np.ones(len(idx)), (idx, np.arange(len(idx)))), shape=(n, len(idx)))
    return np.asarray(m @ flat).reshape((n,) + values.shape[1:])


# --------------------------------------------------------------------------
# primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")
    A, B = a.data, b.data
    ra, rb = a.requires_grad, b.requires_grad
    return _node(A @ B, (a, b), lambda g: (g @ B.T if ra else None, A.T @ g if rb else None))


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise ShapeMismatch(f"add {a.shape} + {b.shape}") from exc
    sa, sb = a.shape, b.shape
    return _node(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise ShapeMismatch(f"mul {a.shape} * {b.shape}") from exc
    A, B = a.data, b.data
    ra, rb = a.requires_grad, b.requires_grad
    return _node(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * B, A.shape) if ra else None, _unbroadcast(g * A, B.shape) if rb else None),
    )


def scale(a: Tensor, c: float) -> Tensor:
    return _node(a.data * c, (a,), lambda g: (g * c,))


def concat(ts: Sequence[Tensor], axis: int = 1) -> Tensor:
    if not ts:
        raise ShapeMismatch("concat of nothing")
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeMismatch(f"concat {[t.shape for t in ts]}") from exc
    cuts = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _node(out, tuple(ts), lambda g: tuple(np.split(g, cuts, axis=axis)))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0  # subgradient 0 at 0
    return _node(a.data * mask, (a,), lambda g: (g * mask,))


def tensor_sum(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    shape = a.shape
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _node(out, (a,), back)


def tensor_mean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else a.shape[axis]
    return scale(tensor_sum(a, axis, keepdims), 1.0 / max(n, 1))


def row_sum(a: Tensor) -> Tensor:
    """Sum over the row axis: (n, d) -> (1, d)."""
    return tensor_sum(a, axis=0, keepdims=True)


def row_mean(a: Tensor) -> Tensor:
    """Mean over the row axis: (n, d) -> (1, d)."""
    return tensor_mean(a, axis=0, keepdims=True)


def gather(a: Tensor, idx) -> Tensor:
    """Rows ``a[idx]``."""
    idx = np.asarray(idx, dtype=np.int64)
    if len(idx) and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise ShapeMismatch(f"gather index out of range for {a.shape[0]} rows")
    n = a.shape[0]

    return _node(a.data[idx], (a,), lambda g: (index_add(n, idx, g),))


def scatter_add(a: Tensor, idx, n: int) -> Tensor:
    """Rows of ``a`` summed into ``n`` output rows at positions ``idx``."""
    idx = np.asarray(idx, dtype=np.int64)
    if len(idx) != a.shape[0]:
        raise ShapeMismatch(f"scatter_add: {len(idx)} indices for {a.shape[0]} rows")
    if len(idx) and (idx.min() < 0 or idx.max() >= n):
        raise ShapeMismatch("scatter_add index out of range")
    return _node(index_add(n, idx, a.data), (a,), lambda g: (g[idx],))


indexed_gather = gather
indexed_scatter_add = scatter_add


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy of integer ``labels`` under row-wise softmax."""
    y = np.asarray(labels, dtype=np.int64)
    z = logits.data
    if z.ndim != 2 or len(y) != z.shape[0]:
        raise ShapeMismatch(f"logits {z.shape} vs {len(y)} labels")
    if len(y) and (y.min() < 0 or y.max() >= z.shape[1]):
        raise LabelOutOfRange(f"labels must lie in [0, {z.shape[1]})")
    m = z.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(z - m).sum(axis=1))
    n = max(len(y), 1)
    loss = (lse - z[np.arange(len(y)), y]).sum() / n

    def back(g):
        p = np.exp(z - lse[:, None])
        p[np.arange(len(y)), y] -= 1.0
        return (p * (g / n),)

    return _node(np.array(loss), (logits,), back)


def sigmoid_binary_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean BCE of 0/1 ``labels`` against logits of shape (n,) or (n, 1)."""
    y = np.asarray(labels, dtype=DTYPE).reshape(-1)
    z = logits.data
    if z.size != len(y):
        raise ShapeMismatch(f"logits {z.shape} vs {len(y)} labels")
    if len(y) and not np.all((y == 0) | (y == 1)):
        raise LabelOutOfRange("binary labels must be 0 or 1")
    zf = z.reshape(-1)
    n = max(len(y), 1)
    # log(1 + exp(z)) - y z, evaluated stably
    loss = (np.maximum(zf, 0) + np.log1p(np.exp(-np.abs(zf))) - y * zf).sum() / n
    shape = z.shape

    def back(g):
        s = 1.0 / (1.0 + np.exp(-zf))
        return (((s - y) * (g / n)).reshape(shape),)

    return _node(np.array(loss), (logits,), back)


def squared_error(pred: Tensor, target) -> Tensor:
    """Mean of (pred - target)^2 over all entries."""
    t = np.asarray(target, dtype=DTYPE).reshape(pred.shape)
    d = pred.data - t
    n = max(d.size, 1)
    return _node(np.array((d * d).sum() / n), (pred,), lambda g: (2.0 * d * (g / n),))


# --------------------------------------------------------------------------
# parameters and optimizer


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape: tuple[int, ...] | None = None) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape or (fan_in, fan_out))


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, params: dict[str, Tensor], grads: dict[str, np.ndarray | None]) -> None:
    """One bias-corrected Adam update, in place. Missing gradients count as zero."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ShapeMismatch(f"gradient for {name}: {g.shape} vs {p.data.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        state.m[name], state.v[name] = m, v
        p.data = p.data - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


class Adam:
    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        adam_step(self.state, self.params, {k: p.grad for k, p in self.params.items()})


def numeric_gradient(f, param: Tensor, index: tuple[int, ...], h: float = 1e-5) -> float:
    """Central difference of scalar ``f()`` w.r.t. one entry of ``param``."""
    old = param.data[index]
    param.data[index] = old + h
    fp = float(f().data)
    param.data[index] = old - h
    fm = float(f().data)
    param.data[index] = old
    return (fp - fm) / (2.0 * h)

