"""Minimal reverse-mode autodiff over float64 numpy arrays.

A Tensor wraps an ndarray plus a backward closure; backward() topologically
sorts the tape and accumulates gradients. Only the ops the encoders need are
provided. matmul requires ndim >= 2 (dot products go through mul/sum).
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special as _special


_GRAD_ENABLED = True


class no_grad:
    """Context manager: tensors created inside never join the tape."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        want = requires_grad or any(p.requires_grad for p in parents)
        self.requires_grad = want and _GRAD_ENABLED
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    # -- bookkeeping -------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operators -----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / np.asarray(other, dtype=np.float64))

    def __rtruediv__(self, other):
        return mul(power(self, -1.0), other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    def swapaxes(self, a, b):
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return transpose(self, tuple(axes))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data, parents=(a, b))

    def backward(g):
        a.accum(_unbroadcast(g, a.data.shape))
        b.accum(_unbroadcast(g, b.data.shape))

    out._backward = backward if out.requires_grad else None
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data, parents=(a, b))

    def backward(g):
        a.accum(_unbroadcast(g * b.data, a.data.shape))
        b.accum(_unbroadcast(g * a.data, b.data.shape))

    out._backward = backward if out.requires_grad else None
    return out


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data ** exponent, parents=(a,))

    def backward(g):
        a.accum(g * exponent * a.data ** (exponent - 1.0))

    out._backward = backward if out.requires_grad else None
    return out


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul requires ndim >= 2")
    out = Tensor(a.data @ b.data, parents=(a, b))

    def backward(g):
        a.accum(_unbroadcast(g @ b.data.swapaxes(-1, -2), a.data.shape))
        b.accum(_unbroadcast(a.data.swapaxes(-1, -2) @ g, b.data.shape))

    out._backward = backward if out.requires_grad else None
    return out


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims), parents=(a,))

    def backward(g):
        gg = np.asarray(g)
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        a.accum(np.broadcast_to(gg, a.data.shape))

    out._backward = backward if out.requires_grad else None
    return out


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        n = a.data.size
    elif isinstance(axis, tuple):
        n = int(np.prod([a.data.shape[ax] for ax in axis]))
    else:
        n = a.data.shape[axis]
    return mul(tsum(a, axis, keepdims), 1.0 / n)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.exp(a.data), parents=(a,))

    def backward(g):
        a.accum(g * out.data)

    out._backward = backward if out.requires_grad else None
    return out


def log(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.log(a.data), parents=(a,))

    def backward(g):
        a.accum(g / a.data)

    out._backward = backward if out.requires_grad else None
    return out


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.tanh(a.data), parents=(a,))

    def backward(g):
        a.accum(g * (1.0 - out.data ** 2))

    out._backward = backward if out.requires_grad else None
    return out


def erf(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(_special.erf(a.data), parents=(a,))

    def backward(g):
        a.accum(g * (2.0 / math.sqrt(math.pi)) * np.exp(-a.data ** 2))

    out._backward = backward if out.requires_grad else None
    return out


def gelu(a) -> Tensor:
    a = as_tensor(a)
    return mul(mul(a, 0.5), add(1.0, erf(mul(a, 1.0 / math.sqrt(2.0)))))


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.maximum(a.data, 0.0), parents=(a,))

    def backward(g):
        a.accum(g * (a.data > 0.0))

    out._backward = backward if out.requires_grad else None
    return out


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.reshape(shape), parents=(a,))

    def backward(g):
        a.accum(g.reshape(a.data.shape))

    out._backward = backward if out.requires_grad else None
    return out


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.transpose(axes), parents=(a,))

    def backward(g):
        inv = None if axes is None else tuple(np.argsort(axes))
        a.accum(g.transpose(inv))

    out._backward = backward if out.requires_grad else None
    return out


def take(a, key) -> Tensor:
    """Slicing / integer-array indexing with gradient scatter-add."""
    a = as_tensor(a)
    out = Tensor(a.data[key], parents=(a,))

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, key, g)
        a.accum(full)

    out._backward = backward if out.requires_grad else None
    return out


def take_rows(table, idx) -> Tensor:
    """Embedding lookup: table (V, d) gathered by an int array idx."""
    table = as_tensor(table)
    idx = np.asarray(idx, dtype=np.int64)
    out = Tensor(table.data[idx], parents=(table,))

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx.reshape(-1),
                  g.reshape(-1, table.data.shape[-1]) if table.data.ndim > 1
                  else g.reshape(-1))
        table.accum(full)

    out._backward = backward if out.requires_grad else None
    return out


def concatenate(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis),
                 parents=tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]

    def backward(g):
        start = 0
        for t, size in zip(tensors, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(start, start + size)
            t.accum(g[tuple(sl)])
            start += size

    out._backward = backward if out.requires_grad else None
    return out


def stack(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.stack([t.data for t in tensors], axis=axis),
                 parents=tuple(tensors))

    def backward(g):
        pieces = np.moveaxis(g, axis, 0)
        for t, piece in zip(tensors, pieces):
            t.accum(piece)

    out._backward = backward if out.requires_grad else None
    return out


def where(cond, a, b) -> Tensor:
    """cond is a plain boolean array (no gradient through the predicate)."""
    cond = np.asarray(cond)
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(np.where(cond, a.data, b.data), parents=(a, b))

    def backward(g):
        a.accum(_unbroadcast(np.where(cond, g, 0.0), a.data.shape))
        b.accum(_unbroadcast(np.where(cond, 0.0, g), b.data.shape))

    out._backward = backward if out.requires_grad else None
    return out


def softmax(a, axis=-1) -> Tensor:
    a = as_tensor(a)
    shifted = add(a, Tensor(-np.max(a.data, axis=axis, keepdims=True)))
    e = exp(shifted)
    return mul(e, power(tsum(e, axis=axis, keepdims=True), -1.0))


def log_softmax(a, axis=-1) -> Tensor:
    a = as_tensor(a)
    shifted = add(a, Tensor(-np.max(a.data, axis=axis, keepdims=True)))
    return add(shifted, mul(log(tsum(exp(shifted), axis=axis, keepdims=True)), -1.0))


def sqrt(a) -> Tensor:
    return power(a, 0.5)


def dot(a, b) -> Tensor:
    """1-D dot product via elementwise ops (matmul is >= 2-D only)."""
    return tsum(mul(a, b))


def norm(a, eps: float = 0.0) -> Tensor:
    return sqrt(add(tsum(mul(a, a)), eps))


def cosine_similarity(a, b, eps: float = 1e-24) -> Tensor:
    return mul(dot(a, b), power(add(mul(tsum(mul(a, a)), tsum(mul(b, b))), eps), -0.5))
