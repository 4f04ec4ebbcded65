"""Reverse-mode automatic differentiation over scalar expression graphs.

A ``Value`` wraps one float64 scalar -- or an ndarray holding the same scalar
expression evaluated at a batch of points -- and records the operation that
produced it.  Graphs are built eagerly through operator overloading, can be
re-evaluated in place after leaf mutation (``Graph.refresh``), and are
differentiated by a single reverse sweep (``Graph.backward``).

First and second derivatives with respect to the spatial input are obtained
by propagating (u, u_x, u_xx) jets forward through the same primitives (see
``Jet``), so u_x and u_xx are ordinary graph nodes and parameter gradients
flow through any expression built from them.

All arithmetic is 64-bit; second-derivative graphs amplify roundoff and
single precision is not sufficient for loss thresholds near 1e-5.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "EvaluationError",
    "Value",
    "Graph",
    "Jet",
    "evaluate",
    "parameter_gradient",
    "input_derivatives",
    "tanh",
    "absolute",
    "pad_const",
    "window",
    "rows",
    "take_cols",
    "matmul",
    "summation",
    "mean",
]

# Denominators smaller than this raise instead of producing infinities.
# WENO weight formulas add eps before dividing, so this path is never hot.
DIV_GUARD = 1e-300


class EvaluationError(RuntimeError):
    """Non-finite intermediate or near-zero divisor during evaluation."""


def _const(other):
    """Coerce a non-Value operand to a float64 constant (scalar or array)."""
    if isinstance(other, np.ndarray):
        return other.astype(np.float64, copy=False)
    return float(other)


def _unbroadcast(grad, shape):
    """Reduce an upstream gradient to the shape of the operand it feeds."""
    g = np.asarray(grad)
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


class Value:
    """One node of the computation graph.

    ``data`` is a float64 scalar (0-d) or an ndarray of independent scalar
    evaluations.  Leaves have no parents; their ``data`` may be mutated
    between ``Graph.refresh`` calls.
    """

    __slots__ = ("data", "grad", "parents", "label", "_fwd", "_bwd")

    def __init__(self, data, parents=(), label="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = 0.0
        self.parents = parents
        self.label = label
        self._fwd = None
        self._bwd = None

    def __repr__(self):
        return f"Value({self.label}, shape={np.shape(self.data)})"

    @property
    def shape(self):
        return self.data.shape

    def _acc(self, g):
        # hot path: matching shapes accumulate in place (grad buffers are
        # always freshly allocated here, never aliased to another node)
        cur = self.grad
        if isinstance(g, np.ndarray) and g.shape == self.data.shape:
            if isinstance(cur, np.ndarray):
                cur += g
            elif cur == 0.0:
                self.grad = g.copy()
            else:
                self.grad = cur + g
        else:
            self.grad = cur + _unbroadcast(g, self.data.shape)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Value):
            out = Value(self.data + other.data, (self, other), "add")

            def fwd():
                out.data = self.data + other.data

            def bwd():
                self._acc(out.grad)
                other._acc(out.grad)

        else:
            c = _const(other)
            out = Value(self.data + c, (self,), "add_const")

            def fwd():
                out.data = self.data + c

            def bwd():
                self._acc(out.grad)

        out._fwd, out._bwd = fwd, bwd
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Value(-self.data, (self,), "neg")

        def fwd():
            out.data = -self.data

        def bwd():
            self._acc(-out.grad)

        out._fwd, out._bwd = fwd, bwd
        return out

    def __sub__(self, other):
        if isinstance(other, Value):
            out = Value(self.data - other.data, (self, other), "sub")

            def fwd():
                out.data = self.data - other.data

            def bwd():
                self._acc(out.grad)
                other._acc(-out.grad)

            out._fwd, out._bwd = fwd, bwd
            return out
        return self + (-1.0 * _const(other))

    def __rsub__(self, other):
        c = _const(other)
        out = Value(c - self.data, (self,), "rsub_const")

        def fwd():
            out.data = c - self.data

        def bwd():
            self._acc(-out.grad)

        out._fwd, out._bwd = fwd, bwd
        return out

    def __mul__(self, other):
        if isinstance(other, Value):
            out = Value(self.data * other.data, (self, other), "mul")

            def fwd():
                out.data = self.data * other.data

            def bwd():
                self._acc(out.grad * other.data)
                other._acc(out.grad * self.data)

        else:
            c = _const(other)
            out = Value(self.data * c, (self,), "mul_const")

            def fwd():
                out.data = self.data * c

            def bwd():
                self._acc(out.grad * c)

        out._fwd, out._bwd = fwd, bwd
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Value):
            _check_divisor(other.data, "div")
            out = Value(self.data / other.data, (self, other), "div")

            def fwd():
                _check_divisor(other.data, "div")
                out.data = self.data / other.data

            def bwd():
                self._acc(out.grad / other.data)
                other._acc(-out.grad * out.data / other.data)

            out._fwd, out._bwd = fwd, bwd
            return out
        return self * (1.0 / _const(other))

    def __rtruediv__(self, other):
        c = float(other)
        _check_divisor(self.data, "rdiv")
        out = Value(c / self.data, (self,), "rdiv")

        def fwd():
            _check_divisor(self.data, "rdiv")
            out.data = c / self.data

        def bwd():
            self._acc(-out.grad * out.data / self.data)

        out._fwd, out._bwd = fwd, bwd
        return out

    def __pow__(self, p):
        p = float(p)
        out = Value(self.data**p, (self,), "pow")

        def fwd():
            out.data = self.data**p

        def bwd():
            self._acc(out.grad * p * self.data ** (p - 1.0))

        out._fwd, out._bwd = fwd, bwd
        return out

    def __abs__(self):
        out = Value(np.abs(self.data), (self,), "abs")

        def fwd():
            out.data = np.abs(self.data)

        def bwd():
            self._acc(out.grad * np.sign(self.data))

        out._fwd, out._bwd = fwd, bwd
        return out


def _check_divisor(d, label):
    if np.min(np.abs(d)) < DIV_GUARD:
        raise EvaluationError(f"near-zero divisor in node '{label}'")


def tanh(a: Value) -> Value:
    out = Value(np.tanh(a.data), (a,), "tanh")

    def fwd():
        out.data = np.tanh(a.data)

    def bwd():
        a._acc(out.grad * (1.0 - out.data * out.data))

    out._fwd, out._bwd = fwd, bwd
    return out


def absolute(a: Value) -> Value:
    return abs(a)


# -- structural operations --------------------------------------------------


def pad_const(a: Value, left: int, right: int, value: float = 0.0) -> Value:
    """Extend the last axis by `left`/`right` ghost entries holding `value`."""
    n = a.data.shape[-1]
    pad_width = [(0, 0)] * (a.data.ndim - 1) + [(left, right)]
    sl = (Ellipsis, slice(left, left + n))
    out = Value(np.pad(a.data, pad_width, constant_values=value), (a,), "pad")

    def fwd():
        out.data = np.pad(a.data, pad_width, constant_values=value)

    def bwd():
        # gradient of padding is the interior slice of the upstream grad
        if not isinstance(a.grad, np.ndarray):
            a.grad = np.full_like(a.data, a.grad)
        a.grad += out.grad[sl]

    out._fwd, out._bwd = fwd, bwd
    return out


def window(a: Value, start: int, length: int) -> Value:
    """Contiguous slice of the last axis."""
    sl = (Ellipsis, slice(start, start + length))
    out = Value(a.data[sl], (a,), "window")

    def fwd():
        out.data = a.data[sl]

    def bwd():
        if not isinstance(a.grad, np.ndarray):
            a.grad = np.full_like(a.data, a.grad)
        a.grad[sl] += out.grad

    out._fwd, out._bwd = fwd, bwd
    return out


def rows(a: Value, start: int, length: int) -> Value:
    """Contiguous slice of the first axis of a 2-D node."""
    sl = slice(start, start + length)
    out = Value(a.data[sl], (a,), "rows")

    def fwd():
        out.data = a.data[sl]

    def bwd():
        if not isinstance(a.grad, np.ndarray):
            a.grad = np.full_like(a.data, a.grad)
        a.grad[sl] += out.grad

    out._fwd, out._bwd = fwd, bwd
    return out


def take_cols(a: Value, idx) -> Value:
    """Gather columns of the last axis at fixed integer indices."""
    idx = tuple(int(i) for i in idx)
    out = Value(a.data[..., idx], (a,), "take_cols")

    def fwd():
        out.data = a.data[..., idx]

    def bwd():
        if not isinstance(a.grad, np.ndarray):
            a.grad = np.full_like(a.data, a.grad)
        np.add.at(a.grad, (Ellipsis, idx), out.grad)

    out._fwd, out._bwd = fwd, bwd
    return out


def matmul(a: Value, b: Value) -> Value:
    """2-D matrix product; used for dense layers and constant stage mixing."""
    out = Value(a.data @ b.data, (a, b), "matmul")

    def fwd():
        out.data = a.data @ b.data

    def bwd():
        a._acc(out.grad @ b.data.T)
        b._acc(a.data.T @ out.grad)

    out._fwd, out._bwd = fwd, bwd
    return out


def summation(a: Value) -> Value:
    out = Value(np.sum(a.data), (a,), "sum")

    def fwd():
        out.data = np.sum(a.data)

    def bwd():
        a._acc(np.broadcast_to(out.grad, a.data.shape))

    out._fwd, out._bwd = fwd, bwd
    return out


def mean(a: Value) -> Value:
    size = a.data.size
    out = Value(np.mean(a.data), (a,), "mean")

    def fwd():
        out.data = np.mean(a.data)

    def bwd():
        a._acc(np.broadcast_to(out.grad / size, a.data.shape))

    out._fwd, out._bwd = fwd, bwd
    return out


# -- graph ------------------------------------------------------------------


def topo_order(root: Value):
    """Ancestors of `root` in evaluation order (iterative postorder DFS)."""
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node in visited:
            continue
        visited.add(node)
        stack.append((node, True))
        for p in node.parents:
            if p not in visited:
                stack.append((p, False))
    return order


class Graph:
    """Topologically ordered view of one root node's ancestry.

    Single-writer: built and evaluated by one execution context at a time.
    Re-evaluation after leaf mutation is `refresh`; `backward` seeds the root
    with 1 and accumulates gradients into every ancestor's ``.grad``.
    """

    def __init__(self, root: Value):
        self.root = root
        self.nodes = topo_order(root)

    def refresh(self):
        for n in self.nodes:
            f = n._fwd
            if f is not None:
                f()
        return self.root.data

    def backward(self):
        if self.root.data.size != 1:
            raise ValueError("backward seed must be a scalar node")
        for n in self.nodes:
            n.grad = 0.0
        self.root.grad = 1.0
        for n in reversed(self.nodes):
            b = n._bwd
            if b is not None:
                b()

    def validate_finite(self):
        for n in self.nodes:
            if not np.all(np.isfinite(n.data)):
                raise EvaluationError(f"non-finite value in node '{n.label}'")


def evaluate(root: Value, inputs: dict | None = None, validate: bool = True):
    """Forward-evaluate the graph under `root`, optionally assigning leaves.

    Every ancestor node holds its forward value afterwards; deterministic for
    fixed inputs.  Raises EvaluationError (naming the offending node) on any
    non-finite intermediate when `validate` is on.
    """
    if inputs:
        for leaf, v in inputs.items():
            if leaf._fwd is not None:
                raise ValueError("inputs may only assign leaf nodes")
            leaf.data = np.asarray(v, dtype=np.float64)
    g = Graph(root)
    g.refresh()
    if validate:
        g.validate_finite()
    return root.data


def parameter_gradient(seed: Value, params) -> dict:
    """d(seed)/d(p) for every parameter leaf p, via one reverse sweep."""
    for p in params:
        p.grad = 0.0
    g = Graph(seed)
    g.refresh()
    g.backward()
    return {p: np.copy(p.grad) if isinstance(p.grad, np.ndarray) else float(p.grad) for p in params}


# -- forward jets for spatial derivatives ------------------------------------


class Jet:
    """A value u and its spatial derivatives u_x, u_xx as live graph nodes.

    `order` says which derivatives are tracked (0, 1 or 2); within that order
    a slot holding None is identically zero.  Keeping the two notions apart
    matters: tanh of an affine map has dxx == None on input but nonzero
    curvature, while an inviscid run at order 1 must not build dxx nodes at
    all.
    """

    __slots__ = ("u", "dx", "dxx", "order")

    def __init__(self, u: Value, dx=None, dxx=None, order=None):
        self.u = u
        self.dx = dx
        self.dxx = dxx
        if order is None:
            order = 2 if dxx is not None else (1 if dx is not None else 0)
        self.order = order

    @staticmethod
    def seed(x: Value, order: int = 2) -> "Jet":
        """Jet of the identity map at x: value x, slope one, curvature zero."""
        one = Value(np.ones_like(x.data), label="dseed")
        return Jet(x, one if order >= 1 else None, None, order=order)

    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet(
                self.u + other.u,
                _nadd(self.dx, other.dx),
                _nadd(self.dxx, other.dxx),
                order=max(self.order, other.order),
            )
        # constant in x: only the value moves
        return Jet(self.u + other, self.dx, self.dxx, order=self.order)

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, Jet):
            a, b = self, other
            order = max(a.order, b.order)
            dx = _nadd(_nmul(a.dx, b.u), _nmul(a.u, b.dx))
            dxx = None
            if order >= 2:
                dxx = _nadd(
                    _nadd(_nmul(a.dxx, b.u), _nmul(a.u, b.dxx)),
                    _nscale(_nmul(a.dx, b.dx), 2.0),
                )
            return Jet(a.u * b.u, dx, dxx, order=order)
        return Jet(
            self.u * other,
            _nscale(self.dx, other),
            _nscale(self.dxx, other),
            order=self.order,
        )

    __rmul__ = __mul__

    def __sub__(self, other):
        return self + (other * -1.0)

    def matmul(self, w: Value) -> "Jet":
        """Left-multiply every jet component by a (constant-in-x) matrix."""
        return Jet(
            matmul(w, self.u),
            None if self.dx is None else matmul(w, self.dx),
            None if self.dxx is None else matmul(w, self.dxx),
            order=self.order,
        )

    def tanh(self) -> "Jet":
        a = tanh(self.u)
        if self.order < 1 or self.dx is None:
            # constant in x stays constant
            return Jet(a, None, None, order=self.order)
        s = 1.0 - a * a
        adx = s * self.dx
        if self.order < 2:
            return Jet(a, adx, None, order=self.order)
        # (tanh u)'' = -2 tanh(u) sech^2(u) u_x^2 + sech^2(u) u_xx
        curv = (a * adx * self.dx) * -2.0
        adxx = curv if self.dxx is None else curv + s * self.dxx
        return Jet(a, adx, adxx, order=2)


def _nadd(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a + b


def _nmul(a, b):
    if a is None or b is None:
        return None
    return a * b


def _nscale(a, c):
    if a is None:
        return None
    return a * c


def input_derivatives(f, x, order: int = 2) -> Jet:
    """Evaluate f at x with u, u_x, u_xx exposed as graph nodes.

    `f` maps a Jet to a Jet using the arithmetic above; `x` is a Value leaf.
    Parameter gradients of expressions containing the returned nodes remain
    valid (the derivative nodes are part of the same graph).
    """
    jet = f(Jet.seed(x, order=order))
    dx, dxx = jet.dx, jet.dxx
    if order >= 1 and dx is None:
        dx = Value(np.zeros_like(jet.u.data), label="zero")
    if order >= 2 and dxx is None:
        dxx = Value(np.zeros_like(jet.u.data), label="zero")
    return Jet(jet.u, dx, dxx, order=order)
