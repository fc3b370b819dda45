"""Minimal reverse-mode differentiation tape over numpy arrays.

Every op here accepts plain ``ndarray`` values or :class:`Var` nodes. When no
argument is a ``Var`` the op is an ordinary numpy computation and returns an
``ndarray``, so one forward implementation serves both inference (no tape)
and training (tape recorded, then :meth:`Var.backward`).
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class NonFiniteError(FloatingPointError):
    """A forward or backward value went non-finite; ``tensor`` names it."""

    def __init__(self, tensor: str, stage: str):
        super().__init__(f"non-finite values in {stage} pass at tensor {tensor!r}")
        self.tensor = tensor
        self.stage = stage


class Var:
    """A tape node: a value, its gradient slot and how to push gradients back."""

    # make numpy defer to our reflected operators (ndarray + Var -> Var.__radd__)
    __array_ufunc__ = None

    __slots__ = ("value", "grad", "name", "_parents", "_backward")

    def __init__(
        self,
        value,
        parents: tuple["Var", ...] = (),
        backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None,
        name: str | None = None,
    ):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents = parents
        self._backward = backward

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Var{label}(shape={self.value.shape})"

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def T(self):
        return transpose(self)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def backward(self, seed: np.ndarray | None = None, check_finite: bool = True) -> None:
        """Accumulate d(self)/d(node) into ``.grad`` of every upstream node."""
        order: list[Var] = []
        seen: set[int] = set()
        stack: list[tuple[Var, bool]] = [(self, False)]
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
        self.grad = np.ones_like(self.value) if seed is None else np.asarray(seed, dtype=np.float64)
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None:
                    continue
                if check_finite and not np.all(np.isfinite(g)):
                    raise NonFiniteError(parent.name or repr(parent), "backward")
                parent.grad = g if parent.grad is None else parent.grad + g


def value(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def is_var(x) -> bool:
    return isinstance(x, Var)


def check_finite(x, name: str):
    """Raise :class:`NonFiniteError` naming ``name`` if ``x`` holds inf/nan."""
    if not np.all(np.isfinite(value(x))):
        raise NonFiniteError(name, "forward")
    return x


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _node(val, parents, backward):
    vars_ = tuple(p for p in parents if isinstance(p, Var))
    if not vars_:
        return val

    def _bw(g):
        full = backward(g)
        return [gp for p, gp in zip(parents, full) if isinstance(p, Var)]

    return Var(val, vars_, _bw)


def add(a, b):
    av, bv = value(a), value(b)
    out = av + bv
    return _node(out, (a, b), lambda g: (_unbroadcast(g, av.shape), _unbroadcast(g, bv.shape)))


def sub(a, b):
    av, bv = value(a), value(b)
    out = av - bv
    return _node(out, (a, b), lambda g: (_unbroadcast(g, av.shape), -_unbroadcast(g, bv.shape)))


def mul(a, b):
    av, bv = value(a), value(b)
    out = av * bv
    return _node(out, (a, b), lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def div(a, b):
    av, bv = value(a), value(b)
    out = av / bv
    return _node(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / bv, av.shape), _unbroadcast(-g * av / (bv * bv), bv.shape)),
    )


def matmul(a, b):
    av, bv = value(a), value(b)
    out = av @ bv

    def bw(g):
        if bv.ndim == 1:
            return np.outer(g, bv), av.T @ g
        if av.ndim == 1:
            return g @ bv.T, np.outer(av, g)
        return g @ bv.T, av.T @ g

    return _node(out, (a, b), bw)


def transpose(x):
    return _node(value(x).T, (x,), lambda g: (g.T,))


def sum(x, axis=None, keepdims: bool = False):  # noqa: A001 - mirrors numpy naming
    xv = value(x)
    out = xv.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, xv.shape).copy(),)

    return _node(out, (x,), bw)


def relu(x):
    xv = value(x)
    out = np.maximum(xv, 0.0)
    return _node(out, (x,), lambda g: (g * (xv > 0.0),))


def sigmoid(x):
    xv = value(x)
    e = np.exp(-np.abs(xv))
    out = np.where(xv >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _node(out, (x,), lambda g: (g * out * (1.0 - out),))


def exp(x):
    out = np.exp(value(x))
    return _node(out, (x,), lambda g: (g * out,))


def log(x):
    xv = value(x)
    return _node(np.log(xv), (x,), lambda g: (g / xv,))


def softmax(x, axis: int = -1):
    xv = value(x)
    z = np.exp(xv - xv.max(axis=axis, keepdims=True))
    out = z / z.sum(axis=axis, keepdims=True)
    return _node(out, (x,), lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),))


def masked_softmax(x, mask: np.ndarray):
    """Row-wise softmax over entries where ``mask`` is true; empty rows are all zero."""
    xv = value(x)
    mask = np.asarray(mask, dtype=bool)
    shifted = np.where(mask, xv, -np.inf)
    row_max = shifted.max(axis=1, keepdims=True)
    row_max = np.where(np.isfinite(row_max), row_max, 0.0)
    z = np.where(mask, np.exp(np.where(mask, xv, 0.0) - row_max), 0.0)
    denom = z.sum(axis=1, keepdims=True)
    out = np.divide(z, denom, out=np.zeros_like(z), where=denom > 0)
    return _node(out, (x,), lambda g: (out * (g - (g * out).sum(axis=1, keepdims=True)),))


def concat(xs: Sequence, axis: int = 0):
    vals = [value(x) for x in xs]
    out = np.concatenate(vals, axis=axis)
    bounds = np.cumsum([v.shape[axis] for v in vals])[:-1]
    return _node(out, tuple(xs), lambda g: tuple(np.split(g, bounds, axis=axis)))


def getitem(x, idx):
    xv = value(x)
    out = xv[idx]

    def bw(g):
        gx = np.zeros_like(xv)
        np.add.at(gx, idx, g)
        return (gx,)

    return _node(out, (x,), bw)


def where(cond, a, b):
    cond = np.asarray(cond, dtype=bool)
    av, bv = value(a), value(b)
    out = np.where(cond, av, bv)
    return _node(
        out,
        (a, b),
        lambda g: (
            _unbroadcast(np.where(cond, g, 0.0), av.shape),
            _unbroadcast(np.where(cond, 0.0, g), bv.shape),
        ),
    )


def stop_gradient(x) -> np.ndarray:
    return value(x).copy()


def reshape(x, shape):
    xv = value(x)
    return _node(xv.reshape(shape), (x,), lambda g: (g.reshape(xv.shape),))


def column(x):
    """View a length-n vector as an ``(n, 1)`` column."""
    return reshape(x, (-1, 1))
