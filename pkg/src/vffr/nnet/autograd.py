"""A small reverse-mode automatic differentiation engine on float64 arrays.

Only the operations the point-cloud network needs are provided.  Graphs are
single-use: :meth:`Tensor.backward` frees the recorded closures and any later
attempt to reuse the freed graph raises :class:`GraphFreedError`.
"""
from __future__ import annotations

import contextlib

import numpy as np

from vffr import pcops

_grad_enabled = True


class GraphFreedError(RuntimeError):
    pass


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording a graph (inference)."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_prev", "_backward", "_freed", "name")

    def __init__(self, data, requires_grad=False, name=None, _prev=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._prev = _prev
        self._backward = _backward
        self._freed = False
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def _accum(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True) if self._prev == () else g
        else:
            self.grad = self.grad + g

    def backward(self, grad=None):
        if self._freed:
            raise GraphFreedError("backward() on a graph that was already freed")
        if grad is None:
            if self.data.size != 1:
                raise ValueError("grad must be given for non-scalar outputs")
            grad = np.ones_like(self.data)
        topo, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            if node._freed:
                raise GraphFreedError("graph contains a freed node")
            stack.append((node, True))
            for p in node._prev:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        self.grad = np.asarray(grad, dtype=np.float64)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        for node in topo:
            if node._prev:
                node._prev = ()
                node._backward = None
                node._freed = True
                node.grad = None

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward):
    for p in parents:
        if p._freed:
            raise GraphFreedError("operand belongs to a freed graph")
    if not (_grad_enabled and any(p.requires_grad for p in parents)):
        return Tensor(data)
    return Tensor(data, requires_grad=True, _prev=tuple(parents), _backward=backward)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        a._accum(_unbroadcast(g, a.shape))
        b._accum(_unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        a._accum(_unbroadcast(g, a.shape))
        b._accum(_unbroadcast(-g, b.shape))

    return _result(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), bw)


def square(a) -> Tensor:
    a = as_tensor(a)
    return _result(a.data * a.data, (a,), lambda g: a._accum(2.0 * a.data * g))


def sum_all(a) -> Tensor:
    a = as_tensor(a)
    return _result(np.array(a.data.sum()), (a,), lambda g: a._accum(np.broadcast_to(g, a.shape).copy()))


def mean_all(a) -> Tensor:
    a = as_tensor(a)
    n = a.data.size
    return _result(np.array(a.data.mean()), (a,),
                   lambda g: a._accum(np.full(a.shape, float(g) / n)))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _result(a.data.reshape(shape), (a,), lambda g: a._accum(g.reshape(a.shape)))


def linear(x, w, b=None, relu=False) -> Tensor:
    """``x @ w + b`` over the last axis of ``x`` (any leading shape).

    ``relu=True`` fuses the rectifier into the same node.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.shape[-1] != w.shape[0]:
        raise ValueError(f"linear: input width {x.shape[-1]} != weight rows {w.shape[0]}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, x.shape[-1])
    out = x2 @ w.data
    if b is not None:
        b = as_tensor(b)
        out += b.data
    if relu:
        np.maximum(out, 0.0, out=out)
    parents = (x, w) if b is None else (x, w, b)

    def bw(g):
        g2 = g.reshape(-1, g.shape[-1])
        if relu:
            g2 = g2 * (out > 0.0)
        if w.requires_grad:
            w._accum(x2.T @ g2)
        if b is not None and b.requires_grad:
            b._accum(g2.sum(axis=0))
        if x.requires_grad:
            x._accum((g2 @ w.data.T).reshape(x.shape))

    return _result(out.reshape(lead + (w.shape[1],)), parents, bw)


def relu(x) -> Tensor:
    x = as_tensor(x)
    out = np.maximum(x.data, 0.0)

    def bw(g):
        x._accum(np.where(out > 0.0, g, 0.0))

    return _result(out, (x,), bw)


def gather_rows(x, idx) -> Tensor:
    """``x[idx]`` for a 2-D ``x``; ``idx`` may have any shape."""
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    out = x.data[idx]

    def bw(g):
        flat = g.reshape(-1, x.shape[1])
        x._accum(pcops.scatter_add_rows(flat, idx.reshape(-1), x.shape[0]))

    return _result(out, (x,), bw)


def max_pool(x) -> Tensor:
    """Max over the member axis of ``(groups, members, channels)``.

    The gradient goes to the first maximiser only.
    """
    x = as_tensor(x)
    out, arg = pcops.group_max(x.data)
    k = x.shape[1]
    return _result(out, (x,), lambda g: x._accum(pcops.group_max_backward(g, arg, k)))


def concat(tensors, axis=-1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, part in zip(tensors, np.split(g, cuts, axis=axis)):
            t._accum(part)

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw)


def interpolate(x, idx, w) -> Tensor:
    """Row-weighted gather: ``out[i] = sum_j w[i, j] * x[idx[i, j]]``."""
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    w = np.asarray(w, dtype=np.float64)
    k = idx.shape[1]
    out = w[:, 0, None] * x.data[idx[:, 0]]
    for j in range(1, k):
        out = out + w[:, j, None] * x.data[idx[:, j]]

    def bw(g):
        contrib = (w[:, :, None] * g[:, None, :]).reshape(-1, g.shape[1])
        x._accum(pcops.scatter_add_rows(contrib, idx.reshape(-1), x.shape[0]))

    return _result(out, (x,), bw)


def group_affine_relu(pf, idx, rel, wp, b) -> Tensor:
    """``relu(pf[idx] + rel @ wp + b)`` as one node.

    ``pf`` holds per-point projections of the member features, ``rel`` the
    member offsets from their group center (constant).
    """
    pf, wp, b = as_tensor(pf), as_tensor(wp), as_tensor(b)
    idx = np.asarray(idx, dtype=np.int64)
    rel2 = np.asarray(rel, dtype=np.float64).reshape(-1, 3)
    c = wp.shape[1]
    out = rel2 @ wp.data
    out += b.data
    out += pf.data[idx.reshape(-1)]
    np.maximum(out, 0.0, out=out)

    def bw(g):
        g2 = g.reshape(-1, c) * (out > 0.0)
        if wp.requires_grad:
            wp._accum(rel2.T @ g2)
        if b.requires_grad:
            b._accum(g2.sum(axis=0))
        if pf.requires_grad:
            pf._accum(pcops.scatter_add_rows(g2, idx.reshape(-1), pf.shape[0]))

    return _result(out.reshape(idx.shape + (c,)), (pf, wp, b), bw)


def broadcast_rows(x, n) -> Tensor:
    """Repeat a single-row tensor ``n`` times."""
    x = as_tensor(x)
    if x.shape[0] != 1:
        raise ValueError("broadcast_rows expects exactly one row")
    return _result(np.repeat(x.data, n, axis=0), (x,),
                   lambda g: x._accum(g.sum(axis=0, keepdims=True)))


def mse_loss(pred, label) -> Tensor:
    """Mean of squared differences; ``label`` is treated as a constant."""
    pred = as_tensor(pred)
    label = np.asarray(label.data if isinstance(label, Tensor) else label, dtype=np.float64)
    if pred.data.size != label.size:
        raise ValueError(f"size mismatch: {pred.data.size} predictions vs {label.size} labels")
    diff = pred.data.reshape(-1) - label.reshape(-1)
    n = diff.size

    def bw(g):
        pred._accum((2.0 * float(g) / n * diff).reshape(pred.shape))

    return _result(np.array(np.mean(diff * diff)), (pred,), bw)
