"""Minimal reverse-mode tape over dual numbers.

Every value on the tape is a :class:`Dual` (value plus one tangent), so a
single backward sweep returns the gradient in the value part and the
Hessian-vector product along the seeded tangent in the tangent part
(forward-over-reverse). Only the handful of ops a dense tanh network needs
are supported.

A :class:`Tape` is not thread safe; build one per evaluation.
"""
from __future__ import annotations

import numpy as np


class Dual:
    __slots__ = ("val", "tan")

    def __init__(self, val, tan=None):
        self.val = np.asarray(val, dtype=float)
        self.tan = np.zeros_like(self.val) if tan is None else np.asarray(tan, dtype=float)

    @property
    def shape(self):
        return self.val.shape

    @property
    def T(self):
        return Dual(self.val.T, self.tan.T)

    def __add__(self, other):
        other = _lift(other)
        return Dual(self.val + other.val, self.tan + other.tan)

    __radd__ = __add__

    def __sub__(self, other):
        other = _lift(other)
        return Dual(self.val - other.val, self.tan - other.tan)

    def __rsub__(self, other):
        return _lift(other) - self

    def __neg__(self):
        return Dual(-self.val, -self.tan)

    def __mul__(self, other):
        other = _lift(other)
        return Dual(self.val * other.val, self.tan * other.val + self.val * other.tan)

    __rmul__ = __mul__

    def __matmul__(self, other):
        other = _lift(other)
        return Dual(self.val @ other.val, self.tan @ other.val + self.val @ other.tan)

    def __rmatmul__(self, other):
        return _lift(other) @ self

    def sum(self, axis=None):
        return Dual(self.val.sum(axis=axis), self.tan.sum(axis=axis))

    def reshape(self, shape):
        return Dual(self.val.reshape(shape), self.tan.reshape(shape))

    def broadcast_to(self, shape):
        return Dual(np.broadcast_to(self.val, shape), np.broadcast_to(self.tan, shape))

    def tanh(self):
        t = np.tanh(self.val)
        return Dual(t, self.tan * (1.0 - t * t))


def _lift(x):
    return x if isinstance(x, Dual) else Dual(x)


def _unbroadcast(g, shape):
    # sum the adjoint back down to the operand's shape
    while len(g.shape) > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis).reshape(g.shape[:axis] + (1,) + g.shape[axis + 1:])
    return g


class Node:
    __slots__ = ("tape", "index", "value")

    def __init__(self, tape, index, value):
        self.tape = tape
        self.index = index
        self.value = value

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return self.tape.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return self.tape.sub(self, other)

    def __neg__(self):
        return self.tape.mul(self, -1.0)

    def __mul__(self, other):
        return self.tape.mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return self.tape.matmul(self, other)

    def __rmatmul__(self, other):
        return self.tape.matmul(self.tape.constant(other), self)


class Tape:
    def __init__(self):
        self._parents = []  # per node: list of (parent index, vjp)
        self._values = []

    def _push(self, value, parents=()):
        self._values.append(value)
        self._parents.append(list(parents))
        return Node(self, len(self._values) - 1, value)

    def variable(self, val, tan=None):
        return self._push(Dual(val, tan))

    def constant(self, x):
        if isinstance(x, Node):
            return x
        return self._push(_lift(x))

    def add(self, a, b):
        a, b = self.constant(a), self.constant(b)
        sa, sb = a.shape, b.shape
        return self._push(a.value + b.value, [
            (a.index, lambda g: _unbroadcast(g, sa)),
            (b.index, lambda g: _unbroadcast(g, sb)),
        ])

    def sub(self, a, b):
        a, b = self.constant(a), self.constant(b)
        sa, sb = a.shape, b.shape
        return self._push(a.value - b.value, [
            (a.index, lambda g: _unbroadcast(g, sa)),
            (b.index, lambda g: -_unbroadcast(g, sb)),
        ])

    def mul(self, a, b):
        a, b = self.constant(a), self.constant(b)
        av, bv = a.value, b.value
        return self._push(av * bv, [
            (a.index, lambda g: _unbroadcast(g * bv, av.shape)),
            (b.index, lambda g: _unbroadcast(g * av, bv.shape)),
        ])

    def matmul(self, a, b):
        a, b = self.constant(a), self.constant(b)
        av, bv = a.value, b.value
        return self._push(av @ bv, [
            (a.index, lambda g: g @ bv.T),
            (b.index, lambda g: av.T @ g),
        ])

    def tanh(self, a):
        y = a.value.tanh()
        return self._push(y, [(a.index, lambda g: g * (1.0 - y * y))])

    def sum(self, a):
        shape = a.shape
        return self._push(a.value.sum(), [(a.index, lambda g: g.broadcast_to(shape))])

    def mean(self, a):
        return self.mul(self.sum(a), 1.0 / a.value.val.size)

    def backward(self, output, wrt):
        """Adjoints of ``output`` (a scalar node) with respect to ``wrt``."""
        adj = [None] * (output.index + 1)
        adj[output.index] = Dual(np.ones_like(output.value.val))
        for i in range(output.index, -1, -1):
            g = adj[i]
            if g is None:
                continue
            for j, vjp in self._parents[i]:
                contrib = vjp(g)
                adj[j] = contrib if adj[j] is None else adj[j] + contrib
        out = []
        for node in wrt:
            g = adj[node.index] if node.index < len(adj) else None
            out.append(Dual(np.zeros(node.shape)) if g is None else g)
        return out
