"""Scalar reverse-mode automatic differentiation on an append-only tape.

Each node stores its forward value, the indices of its operands and the local
partial derivatives with respect to them.  Nodes are appended in evaluation
order, so the tape is topologically sorted by construction and the backward
pass is a single reverse sweep.

Subgradient conventions (fixed, so every finite forward value has a finite
gradient):

* ``abs``: derivative 0 at 0.
* ``maximum(x, c)`` / ``relu``: derivative 0 when ``x == c``.
* ``minimum(a, b)``: the gradient goes to ``a`` on ties.
"""
from __future__ import annotations

import math

import numpy as np


class Tape:
    def __init__(self):
        self.values: list[float] = []
        self.parents: list[tuple[int, ...]] = []
        self.partials: list[tuple[float, ...]] = []
        self._param_leaves: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self.last_backward_visits = 0

    def __len__(self):
        return len(self.values)

    def _push(self, value, parents=(), partials=()) -> "Var":
        self.values.append(float(value))
        self.parents.append(parents)
        self.partials.append(partials)
        return Var(self, len(self.values) - 1)

    def leaf(self, value) -> "Var":
        return self._push(value)

    def param_leaves(self, array: np.ndarray) -> np.ndarray:
        """Object array of leaf nodes mirroring ``array`` (created once per array)."""
        key = id(array)
        if key not in self._param_leaves:
            leaves = np.empty(array.shape, dtype=object)
            for idx in np.ndindex(array.shape):
                leaves[idx] = self.leaf(array[idx])
            self._param_leaves[key] = (array, leaves)
        return self._param_leaves[key][1]

    def grad_of(self, array: np.ndarray, adjoints: np.ndarray) -> np.ndarray:
        leaves = self._param_leaves[id(array)][1]
        out = np.zeros(array.shape)
        for idx in np.ndindex(array.shape):
            out[idx] = adjoints[leaves[idx].idx]
        return out


def _lift(tape: Tape, x) -> "Var":
    return x if isinstance(x, Var) else tape.leaf(x)


class Var:
    __slots__ = ("tape", "idx")

    def __init__(self, tape: Tape, idx: int):
        self.tape = tape
        self.idx = idx

    @property
    def value(self) -> float:
        return self.tape.values[self.idx]

    def __repr__(self):
        return f"Var({self.value!r}, idx={self.idx})"

    def __add__(self, other):
        if isinstance(other, Var):
            return self.tape._push(self.value + other.value, (self.idx, other.idx), (1.0, 1.0))
        return self.tape._push(self.value + other, (self.idx,), (1.0,))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Var):
            return self.tape._push(self.value - other.value, (self.idx, other.idx), (1.0, -1.0))
        return self.tape._push(self.value - other, (self.idx,), (1.0,))

    def __rsub__(self, other):
        return self.tape._push(other - self.value, (self.idx,), (-1.0,))

    def __neg__(self):
        return self.tape._push(-self.value, (self.idx,), (-1.0,))

    def __mul__(self, other):
        if isinstance(other, Var):
            return self.tape._push(
                self.value * other.value, (self.idx, other.idx), (other.value, self.value)
            )
        return self.tape._push(self.value * other, (self.idx,), (float(other),))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            b = other.value
            return self.tape._push(
                self.value / b, (self.idx, other.idx), (1.0 / b, -self.value / (b * b))
            )
        return self.tape._push(self.value / other, (self.idx,), (1.0 / other,))

    def __rtruediv__(self, other):
        b = self.value
        return self.tape._push(other / b, (self.idx,), (-other / (b * b),))


def exp(x: Var) -> Var:
    e = math.exp(x.value)
    return x.tape._push(e, (x.idx,), (e,))


def log(x: Var) -> Var:
    return x.tape._push(math.log(x.value), (x.idx,), (1.0 / x.value,))


def maximum(x: Var, c: float) -> Var:
    """``max(x, c)`` for a constant ``c``."""
    if x.value > c:
        return x.tape._push(x.value, (x.idx,), (1.0,))
    return x.tape._push(c, (x.idx,), (0.0,))


def relu(x: Var) -> Var:
    return maximum(x, 0.0)


def minimum(a: Var, b) -> Var:
    b = _lift(a.tape, b)
    if b.value < a.value:
        return a.tape._push(b.value, (b.idx,), (1.0,))
    return a.tape._push(a.value, (a.idx,), (1.0,))


def absolute(x: Var) -> Var:
    v = x.value
    slope = 1.0 if v > 0 else (-1.0 if v < 0 else 0.0)
    return x.tape._push(abs(v), (x.idx,), (slope,))


def clip(x: Var, lo: float, hi: float) -> Var:
    if x.value > hi:
        return x.tape._push(hi, (x.idx,), (0.0,))
    if x.value < lo:
        return x.tape._push(lo, (x.idx,), (0.0,))
    return x.tape._push(x.value, (x.idx,), (1.0,))


def power(x: Var, p: float) -> Var:
    """``x**p`` for a constant exponent; derivative 0 at x == 0 when p < 1."""
    v = x.value
    d = p * v ** (p - 1.0) if v != 0.0 or p >= 1.0 else 0.0
    return x.tape._push(v**p, (x.idx,), (d,))


def ncdf(x: Var) -> Var:
    v = x.value
    return x.tape._push(
        0.5 * math.erfc(-v / math.sqrt(2.0)), (x.idx,), (math.exp(-0.5 * v * v) / math.sqrt(2.0 * math.pi),)
    )


def total(terms) -> Var:
    """Sum of many nodes recorded as one node (keeps the tape short)."""
    terms = list(terms)
    tape = terms[0].tape
    return tape._push(
        math.fsum(t.value for t in terms), tuple(t.idx for t in terms), (1.0,) * len(terms)
    )


def backward(tape: Tape, output) -> np.ndarray:
    """Adjoint of ``output`` with respect to every node on the tape."""
    if not isinstance(output, Var):
        raise TypeError(f"backward needs a scalar tape node, got {type(output).__name__}")
    if output.tape is not tape:
        raise ValueError("output node belongs to a different tape")
    adj = np.zeros(len(tape.values))
    adj[output.idx] = 1.0
    parents, partials = tape.parents, tape.partials
    visits = 0
    for i in range(output.idx, -1, -1):
        visits += 1
        g = adj[i]
        if g == 0.0:
            continue
        for j, d in zip(parents[i], partials[i]):
            adj[j] += g * d
    tape.last_backward_visits = visits
    return adj
