"""Reverse-mode differentiation over float64 numpy arrays.

A :class:`Tensor` records the op that produced it; :meth:`Tensor.backward`
walks the graph in reverse topological order. Only the ops the transformer,
the proxy learner and the losses need are implemented.
"""
from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def as_tensor(x) -> "Tensor":
    return x if isinstance(x, Tensor) else Tensor(x)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = ()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = None

    # -- graph bookkeeping -------------------------------------------------
    @staticmethod
    def _make(data, parents, backward) -> "Tensor":
        live = tuple(p for p in parents if p.requires_grad)
        out = Tensor(data, requires_grad=bool(live), _parents=live)
        if live:
            out._backward = backward
        return out

    def _acc(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None) -> None:
        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data) if grad is None else np.asarray(grad, dtype=np.float64)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- elementwise -------------------------------------------------------
    def __add__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            a._acc(_unbroadcast(g, a.shape))
            b._acc(_unbroadcast(g, b.shape))

        return Tensor._make(a.data + b.data, (a, b), bw)

    __radd__ = __add__

    def __neg__(self):
        a = self
        return Tensor._make(-a.data, (a,), lambda g: a._acc(-g))

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._acc(_unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                b._acc(_unbroadcast(g * a.data, b.shape))

        return Tensor._make(a.data * b.data, (a, b), bw)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Tensor):
            return self * (1.0 / np.asarray(other, dtype=np.float64))
        return self * other ** -1.0

    def __rtruediv__(self, other):
        return as_tensor(other) * self ** -1.0

    def __pow__(self, p: float):
        a = self
        p = float(p)
        out = a.data ** p
        return Tensor._make(out, (a,), lambda g: a._acc(g * p * a.data ** (p - 1.0)))

    def exp(self):
        a = self
        out = np.exp(a.data)
        return Tensor._make(out, (a,), lambda g: a._acc(g * out))

    def log(self):
        a = self
        return Tensor._make(np.log(a.data), (a,), lambda g: a._acc(g / a.data))

    def tanh(self):
        a = self
        out = np.tanh(a.data)
        return Tensor._make(out, (a,), lambda g: a._acc(g * (1.0 - out * out)))

    def sigmoid(self):
        a = self
        out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
        return Tensor._make(out, (a,), lambda g: a._acc(g * out * (1.0 - out)))

    def gelu(self):
        # tanh approximation; smooth everywhere, which keeps finite differences clean
        a = self
        x = a.data
        c = np.sqrt(2.0 / np.pi)
        x2 = x * x
        inner = c * x * (1.0 + 0.044715 * x2)
        t = np.tanh(inner)
        out = 0.5 * x * (1.0 + t)

        def bw(g):
            dinner = c * (1.0 + 3 * 0.044715 * x2)
            a._acc(g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner))

        return Tensor._make(out, (a,), bw)

    # -- reductions --------------------------------------------------------
    def sum(self, axis=None, keepdims: bool = False):
        a = self
        out = a.data.sum(axis=axis, keepdims=keepdims)

        def bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a._acc(np.broadcast_to(g, a.shape))

        return Tensor._make(out, (a,), bw)

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else np.prod([self.shape[i] for i in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    def softmax(self, axis: int = -1):
        a = self
        z = a.data - a.data.max(axis=axis, keepdims=True)
        e = np.exp(z)
        out = e / e.sum(axis=axis, keepdims=True)

        def bw(g):
            a._acc(out * (g - (g * out).sum(axis=axis, keepdims=True)))

        return Tensor._make(out, (a,), bw)

    def log_softmax(self, axis: int = -1):
        a = self
        z = a.data - a.data.max(axis=axis, keepdims=True)
        lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
        out = z - lse
        p = np.exp(out)

        def bw(g):
            a._acc(g - p * g.sum(axis=axis, keepdims=True))

        return Tensor._make(out, (a,), bw)

    def logsumexp(self, axis: int = -1):
        a = self
        m = a.data.max(axis=axis, keepdims=True)
        s = np.exp(a.data - m).sum(axis=axis, keepdims=True)
        out_k = m + np.log(s)
        p = np.exp(a.data - out_k)
        out = np.squeeze(out_k, axis=axis)

        def bw(g):
            a._acc(np.expand_dims(g, axis) * p)

        return Tensor._make(out, (a,), bw)

    # -- shape ops ---------------------------------------------------------
    def reshape(self, *shape):
        a = self
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Tensor._make(a.data.reshape(shape), (a,), lambda g: a._acc(g.reshape(a.shape)))

    def transpose(self, *axes):
        a = self
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = np.argsort(axes)
        return Tensor._make(a.data.transpose(axes), (a,), lambda g: a._acc(g.transpose(inv)))

    def swapaxes(self, i: int, j: int):
        a = self
        return Tensor._make(np.swapaxes(a.data, i, j), (a,), lambda g: a._acc(np.swapaxes(g, i, j)))

    def __getitem__(self, idx):
        a = self

        parts = idx if isinstance(idx, tuple) else (idx,)
        basic = all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in parts)

        def bw(g):
            full = np.zeros_like(a.data)
            if basic:
                full[idx] += g
            else:
                np.add.at(full, idx, g)
            a._acc(full)

        return Tensor._make(a.data[idx], (a,), bw)

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                if b.ndim == 1:
                    ga = np.multiply.outer(g, b.data)
                else:
                    ga = g @ np.swapaxes(b.data, -1, -2)
                a._acc(_unbroadcast(ga, a.shape))
            if b.requires_grad:
                if a.ndim == 1:
                    gb = np.multiply.outer(a.data, g)
                elif b.ndim == 2 and a.ndim > 2:
                    # weight matrix shared across leading dims: one flat GEMM
                    gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
                else:
                    gb = np.swapaxes(a.data, -1, -2) @ g
                b._acc(_unbroadcast(gb, b.shape))

        return Tensor._make(a.data @ b.data, (a, b), bw)


def concat(tensors, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(ts, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._acc(g[tuple(sl)])

    return Tensor._make(np.concatenate([t.data for t in ts], axis=axis), tuple(ts), bw)


def take_along(x: Tensor, index: np.ndarray) -> Tensor:
    """Rows ``x[b, index[b]]`` of a (B, T, ...) tensor."""
    b = np.arange(x.shape[0])
    return x[(b, np.asarray(index))]
