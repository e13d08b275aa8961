"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Every backward rule is itself expressed through the primitives below, so a
second reverse pass through a gradient is valid; this is what the critic's
gradient penalty needs.  Graphs are implicit: each Tensor keeps its parents
and a vector-Jacobian closure, and `grad` walks the topological order.

Conventions: relu/leaky_relu take the right derivative at 0; clamp passes
gradient only strictly inside its interval; abs has derivative 0 at 0.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NotInGraph, ShapeMismatch

_GRAD_ENABLED = [True]


@contextmanager
def no_grad():
    """Disable graph construction inside the block (forward values only)."""
    _GRAD_ENABLED.append(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.pop()


class Tensor:
    """Dense float64 array with an optional differentiation graph handle."""

    __slots__ = ("data", "requires_grad", "parents", "grad_fn")

    def __init__(self, data, requires_grad: bool = False, parents=(), grad_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.parents = tuple(parents)
        self.grad_fn = grad_fn

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

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, neg(_wrap(other)))

    def __rsub__(self, other):
        return add(_wrap(other), neg(self))

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return narrow(self, key)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, shape):
        return reshape(self, shape)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, grad_fn) -> Tensor:
    if _GRAD_ENABLED[-1] and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=parents, grad_fn=grad_fn)
    return Tensor(data)


def _unbroadcast(g: Tensor, shape: tuple) -> Tensor:
    """Reduce a broadcast gradient back to the original operand shape."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = tsum(g, axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = tsum(g, axis=axis, keepdims=True)
    if g.shape != shape:
        g = reshape(g, shape)
    return g


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(out_data, (a, b), backward)


def neg(a) -> Tensor:
    a = _wrap(a)
    return _make(-a.data, (a,), lambda g: (neg(g),))


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data * b.data

    def backward(g):
        return _unbroadcast(mul(g, b), a.shape), _unbroadcast(mul(g, a), b.shape)

    return _make(out_data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data / b.data
    out = _make(out_data, (a, b), None)

    def backward(g):
        return (_unbroadcast(div(g, b), a.shape),
                _unbroadcast(neg(div(mul(g, out), b)), b.shape))

    out.grad_fn = backward
    return out


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeMismatch("matmul expects 2-D operands")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul shapes {a.shape} and {b.shape} do not chain")

    def backward(g):
        return matmul(g, transpose(b)), matmul(transpose(a), g)

    return _make(a.data @ b.data, (a, b), backward)


def transpose(a) -> Tensor:
    a = _wrap(a)
    return _make(a.data.T, (a,), lambda g: (transpose(g),))


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (reshape(g, old),))


def broadcast_to(a, shape) -> Tensor:
    a = _wrap(a)
    old = a.shape
    return _make(np.broadcast_to(a.data, shape).copy(), (a,),
                 lambda g: (_unbroadcast(g, old),))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        grads = []
        for k in range(len(tensors)):
            key = [slice(None)] * g.ndim
            key[axis] = slice(int(offsets[k]), int(offsets[k + 1]))
            grads.append(narrow(g, tuple(key)))
        return tuple(grads)

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def narrow(a, key) -> Tensor:
    """Basic slicing; the adjoint scatters the gradient into zeros."""
    a = _wrap(a)
    shape = a.shape
    return _make(a.data[key], (a,), lambda g: (_scatter(g, shape, key),))


def _scatter(g, shape, key) -> Tensor:
    g = _wrap(g)
    data = np.zeros(shape)
    data[key] = g.data
    return _make(data, (g,), lambda gg: (narrow(gg, key),))


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    in_shape = a.shape

    def backward(g):
        if axis is None:
            kept = (1,) * len(in_shape)
        elif keepdims:
            kept = g.shape
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            axes = tuple(ax % len(in_shape) for ax in axes)
            kept = tuple(1 if i in axes else s for i, s in enumerate(in_shape))
        return (broadcast_to(reshape(g, kept), in_shape),)

    return _make(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), backward)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    n = a.data.size if axis is None else np.prod(
        [a.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))])
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / float(n))


def relu(a) -> Tensor:
    a = _wrap(a)
    mask = Tensor((a.data >= 0).astype(np.float64))
    return _make(np.maximum(a.data, 0.0), (a,), lambda g: (mul(g, mask),))


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = _wrap(a)
    mask = (a.data >= 0).astype(np.float64)
    scale = Tensor(mask + slope * (1.0 - mask))
    return _make(np.where(a.data >= 0, a.data, slope * a.data), (a,),
                 lambda g: (mul(g, scale),))


def tanh(a) -> Tensor:
    a = _wrap(a)
    out = _make(np.tanh(a.data), (a,), None)
    out.grad_fn = lambda g: (mul(g, 1.0 - mul(out, out)),)
    return out


def sqrt(a) -> Tensor:
    a = _wrap(a)
    if np.any(a.data < 0):
        raise DomainError("sqrt of a negative value")
    out = _make(np.sqrt(a.data), (a,), None)
    out.grad_fn = lambda g: (div(g, mul(out, 2.0)),)
    return out


def cos(a) -> Tensor:
    a = _wrap(a)
    return _make(np.cos(a.data), (a,), lambda g: (neg(mul(g, sin(a))),))


def sin(a) -> Tensor:
    a = _wrap(a)
    return _make(np.sin(a.data), (a,), lambda g: (mul(g, cos(a)),))


def acos(a) -> Tensor:
    a = _wrap(a)
    if np.any(np.abs(a.data) > 1.0):
        raise DomainError("acos input outside [-1, 1]")

    def backward(g):
        # the floor keeps |a| = 1 rows finite so an outer zero mask can kill
        # them instead of propagating 0 * inf = nan
        return (neg(div(g, sqrt(clamp(1.0 - mul(a, a), 1e-300, 2.0)))),)

    return _make(np.arccos(a.data), (a,), backward)


def clamp(a, lo: float, hi: float) -> Tensor:
    a = _wrap(a)
    mask = Tensor(((a.data > lo) & (a.data < hi)).astype(np.float64))
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (mul(g, mask),))


def absolute(a) -> Tensor:
    a = _wrap(a)
    sign = Tensor(np.sign(a.data))
    return _make(np.abs(a.data), (a,), lambda g: (mul(g, sign),))


def l2_norm(a, axis=None, keepdims: bool = False) -> Tensor:
    return sqrt(tsum(mul(a, a), axis=axis, keepdims=keepdims))


def topological_order(output: Tensor) -> list:
    """Graph nodes that require gradient, parents before children."""
    order, seen = [], set()
    stack = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if id(node) in seen:
            continue
        if expanded:
            seen.add(id(node))
            order.append(node)
            continue
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def grad(output: Tensor, wrt, create_graph: bool = False) -> list:
    """Reverse-mode gradients of a scalar output.

    With create_graph the returned gradients carry their own graph, so they
    can be differentiated again (double backprop).
    """
    if output.data.size != 1:
        raise ShapeMismatch("grad needs a scalar output")
    wrt = list(wrt)
    order = topological_order(output)
    in_graph = {id(t) for t in order}
    for w in wrt:
        if id(w) not in in_graph:
            raise NotInGraph("requested tensor does not participate in the output")

    grads = {id(output): Tensor(np.ones_like(output.data))}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None or node.grad_fn is None:
            continue
        for p, pg in zip(node.parents, node.grad_fn(g)):
            if pg is None or not p.requires_grad:
                continue
            if id(p) in grads:
                grads[id(p)] = add(grads[id(p)], pg)
            else:
                grads[id(p)] = pg

    out = []
    for w in wrt:
        g = grads.get(id(w))
        if g is None:
            g = Tensor(np.zeros_like(w.data))
        out.append(g if create_graph else g.detach())
    return out


@dataclass
class AdamState:
    """First/second moment accumulators for one parameter list."""

    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, beta1: float = 0.9, beta2: float = 0.999,
                   eps: float = 1e-8) -> "AdamState":
        arrays = [p.data if isinstance(p, Tensor) else np.asarray(p) for p in params]
        return cls(m=[np.zeros_like(a) for a in arrays],
                   v=[np.zeros_like(a) for a in arrays],
                   t=0, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(params, grads, state: AdamState, lr: float):
    """Bias-corrected Adam update, in place on the parameter arrays."""
    arrays = [p.data if isinstance(p, Tensor) else p for p in params]
    garrays = [g.data if isinstance(g, Tensor) else np.asarray(g, dtype=np.float64)
               for g in grads]
    if len(arrays) != len(garrays) or len(arrays) != len(state.m):
        raise ShapeMismatch("params, grads and state must have matching lengths")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for a, g, m, v in zip(arrays, garrays, state.m, state.v):
        if a.shape != g.shape:
            raise ShapeMismatch(f"param shape {a.shape} != grad shape {g.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        a -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def fd_gradient(f, xs: list, h: float = 1e-5) -> list:
    """Central finite differences of a scalar function of numpy arrays."""
    base = [np.array(x, dtype=np.float64) for x in xs]
    out = []
    for i, x in enumerate(base):
        g = np.zeros_like(x)
        flat = x.reshape(-1)
        gflat = g.reshape(-1)
        for k in range(flat.size):
            keep = flat[k]
            flat[k] = keep + h
            hi = f(base)
            flat[k] = keep - h
            lo = f(base)
            flat[k] = keep
            gflat[k] = (hi - lo) / (2.0 * h)
        out.append(g)
    return out
