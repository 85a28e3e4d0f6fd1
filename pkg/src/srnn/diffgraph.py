"""Define-by-run reverse-mode differentiation over float64 numpy arrays.

A :class:`Tape` records every node created on it in topological order.
Learnable arrays live in :class:`Parameter` objects outside the tape; each tape
binds a parameter to one leaf node on first use, and :meth:`Tape.backward`
returns the gradient for every bound parameter.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

from .numerics import logsumexp, softmax_weights


class ShapeError(ValueError):
    pass


class Parameter:
    """A named learnable array."""

    __slots__ = ("name", "value")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.ascontiguousarray(value, dtype=np.float64)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


class Node:
    __slots__ = ("value", "parents", "backward_fn", "op", "requires_grad", "index", "tape")

    def __init__(self, tape, value, parents=(), backward_fn=None, op="leaf", requires_grad=False):
        self.tape = tape
        self.value = value
        self.parents = parents
        self.backward_fn = backward_fn
        self.op = op
        self.requires_grad = requires_grad
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

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

    def __neg__(self):
        return scale(self, -1.0)

    def __getitem__(self, idx):
        return take(self, idx)

    def __repr__(self):
        return f"Node({self.op}, shape={self.value.shape})"


class Tape:
    def __init__(self):
        self.nodes: list[Node] = []
        self._leaves: dict[int, tuple[Parameter, Node]] = {}

    def param(self, p: Parameter) -> Node:
        hit = self._leaves.get(id(p))
        if hit is None:
            node = Node(self, p.value, op="param", requires_grad=True)
            self._leaves[id(p)] = (p, node)
            return node
        return hit[1]

    def const(self, value) -> Node:
        return Node(self, np.asarray(value, dtype=np.float64), op="const")

    def backward(self, root: Node) -> dict[str, np.ndarray]:
        """Reverse sweep from a scalar root; returns ``{parameter name: gradient}``."""
        if root.tape is not self:
            raise ValueError("root belongs to a different tape")
        if root.value.size != 1:
            raise ShapeError(f"backward root must be scalar, got shape {root.value.shape}")
        grads: dict[int, np.ndarray] = {root.index: np.ones_like(root.value)}
        for node in reversed(self.nodes[: root.index + 1]):
            g = grads.pop(node.index, None)
            if g is None or node.backward_fn is None:
                if g is not None:
                    grads[node.index] = g  # leaf: keep for collection
                continue
            parent_grads = node.backward_fn(g)
            for parent, pg in zip(node.parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                prev = grads.get(parent.index)
                grads[parent.index] = pg if prev is None else prev + pg
        out = {}
        for p, node in self._leaves.values():
            g = grads.get(node.index)
            out[p.name] = np.zeros_like(p.value) if g is None else np.asarray(g).reshape(p.value.shape)
        return out


# Test hook: names of primitives whose backward rule is deliberately corrupted.
_FAULTS: set[str] = set()


@contextlib.contextmanager
def inject_backward_fault(op: str):
    """Halve the backward rule of primitive ``op`` while the context is active."""
    _FAULTS.add(op)
    try:
        yield
    finally:
        _FAULTS.discard(op)


def _tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Node):
            return x.tape
    raise ValueError("at least one operand must be a tape node")


def _lift(tape: Tape, x) -> Node:
    return x if isinstance(x, Node) else tape.const(x)


def _make(tape, value, parents, backward_fn, op) -> Node:
    req = False
    for p in parents:
        if p.requires_grad:
            req = True
            break
    if _FAULTS and op in _FAULTS and backward_fn is not None:
        inner = backward_fn

        def backward_fn(g):
            return [None if pg is None else 0.5 * pg for pg in inner(g)]

    node = Node.__new__(Node)
    node.tape = tape
    node.value = value
    node.parents = parents
    node.backward_fn = backward_fn if req else None
    node.op = op
    node.requires_grad = req
    node.index = len(tape.nodes)
    tape.nodes.append(node)
    return node


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# -- elementwise -----------------------------------------------------------


def add(a, b) -> Node:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    sa, sb = a.value.shape, b.value.shape

    def bw(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _make(tape, a.value + b.value, (a, b), bw, "add")


def sub(a, b) -> Node:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    sa, sb = a.value.shape, b.value.shape

    def bw(g):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return _make(tape, a.value - b.value, (a, b), bw, "sub")


def mul(a, b) -> Node:
    """Elementwise product with numpy broadcasting."""
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    av, bv = a.value, b.value

    def bw(g):
        return _unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)

    return _make(tape, av * bv, (a, b), bw, "mul")


elementwise_mul = mul


def scale(a: Node, c: float) -> Node:
    def bw(g):
        return (g * c,)

    return _make(a.tape, a.value * c, (a,), bw, "scale")


def add_scalar(a: Node, c: float) -> Node:
    return _make(a.tape, a.value + c, (a,), lambda g: (g,), "add_scalar")


def tanh(a: Node) -> Node:
    y = np.tanh(a.value)

    def bw(g):
        return (g * (1.0 - y * y),)

    return _make(a.tape, y, (a,), bw, "tanh")


def sigmoid(a: Node) -> Node:
    y = 0.5 * (1.0 + np.tanh(0.5 * a.value))

    def bw(g):
        return (g * y * (1.0 - y),)

    return _make(a.tape, y, (a,), bw, "sigmoid")


def exp(a: Node) -> Node:
    y = np.exp(a.value)
    return _make(a.tape, y, (a,), lambda g: (g * y,), "exp")


def log(a: Node) -> Node:
    x = a.value
    return _make(a.tape, np.log(x), (a,), lambda g: (g / x,), "log")


# -- linear algebra --------------------------------------------------------


def matmul(a, b) -> Node:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    av, bv = a.value, b.value
    if av.ndim == 0 or bv.ndim == 0 or av.shape[-1] != bv.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {av.shape} @ {bv.shape}")

    def bw(g):
        if av.ndim == 1 and bv.ndim == 1:
            return g * bv, g * av
        if av.ndim == 2 and bv.ndim == 1:
            return np.outer(g, bv), av.T @ g
        if av.ndim == 1 and bv.ndim == 2:
            return bv @ g, np.outer(av, g)
        return g @ bv.T, av.T @ g

    return _make(tape, av @ bv, (a, b), bw, "matmul")


def dot(w, x) -> Node:
    """Inner product of two vectors."""
    tape = _tape_of(w, x)
    w, x = _lift(tape, w), _lift(tape, x)
    if w.value.ndim != 1 or w.value.shape != x.value.shape:
        raise ShapeError(f"dot: expected equal-length vectors, got {w.value.shape} and {x.value.shape}")
    return matmul(w, x)


def affine(W, x, bias=None) -> Node:
    """``W x + bias`` for a vector ``x``, or row-wise ``X W^T + bias`` for a matrix.

    ``W`` has shape (out, in).
    """
    tape = _tape_of(W, x, bias)
    W, x = _lift(tape, W), _lift(tape, x)
    Wv, xv = W.value, x.value
    if Wv.ndim != 2 or xv.ndim not in (1, 2) or xv.shape[-1] != Wv.shape[1]:
        raise ShapeError(f"affine: W{Wv.shape} incompatible with x{xv.shape}")
    y = xv @ Wv.T
    parents = [W, x]
    if bias is not None:
        bias = _lift(tape, bias)
        if bias.value.shape != (Wv.shape[0],):
            raise ShapeError(f"affine: bias shape {bias.value.shape}, expected ({Wv.shape[0]},)")
        y = y + bias.value
        parents.append(bias)

    def bw(g):
        if xv.ndim == 1:
            grads = [np.outer(g, xv), g @ Wv]
            if bias is not None:
                grads.append(g)
        else:
            grads = [g.T @ xv, g @ Wv]
            if bias is not None:
                grads.append(g.sum(axis=0))
        return grads

    return _make(tape, y, parents, bw, "affine")


# -- structural ------------------------------------------------------------


def concat(xs: Sequence, axis: int = -1) -> Node:
    tape = _tape_of(*xs)
    xs = [_lift(tape, x) for x in xs]
    vals = [x.value for x in xs]
    try:
        y = np.concatenate(vals, axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {[v.shape for v in vals]}: {exc}") from None
    ax = axis % y.ndim
    bounds, acc = [], 0
    for v in vals[:-1]:
        acc += v.shape[ax]
        bounds.append(acc)

    def bw(g):
        return np.split(g, bounds, axis=ax)

    return _make(tape, y, xs, bw, "concat")


def stack(xs: Sequence, axis: int = 0) -> Node:
    tape = _tape_of(*xs)
    xs = [_lift(tape, x) for x in xs]
    vals = [x.value for x in xs]
    try:
        y = np.array(vals) if axis == 0 else np.stack(vals, axis=axis)
        if axis == 0 and y.shape[1:] != vals[0].shape:
            raise ValueError("ragged input")
    except ValueError as exc:
        raise ShapeError(f"stack: {[x.value.shape for x in xs]}: {exc}") from None

    def bw(g):
        return [np.take(g, k, axis=axis) for k in range(len(xs))]

    return _make(tape, y, xs, bw, "stack")


_BASIC = (int, slice, np.int64, type(None), type(Ellipsis))


def _is_basic(idx) -> bool:
    if type(idx) is tuple:
        for i in idx:
            if type(i) not in _BASIC:
                return False
        return True
    return type(idx) in _BASIC


def take(a: Node, idx) -> Node:
    """``a[idx]`` with numpy semantics; repeated fancy indices accumulate gradient."""
    try:
        y = a.value[idx]
    except IndexError as exc:
        raise ShapeError(f"take: index {idx!r} invalid for shape {a.value.shape}") from None
    shape = a.value.shape
    basic = _is_basic(idx)

    def bw(g):
        out = np.zeros(shape)
        if basic:
            out[idx] += g
        else:
            np.add.at(out, idx, g)
        return (out,)

    if type(y) is not np.ndarray:
        y = np.asarray(y)
    return _make(a.tape, y, (a,), bw, "take")


def lookup(table: Node, index) -> Node:
    """Row lookup into an embedding table (int or integer array)."""
    if table.value.ndim != 2:
        raise ShapeError(f"lookup: table must be 2-d, got {table.value.shape}")
    return take(table, index)


def reshape(a: Node, shape) -> Node:
    old = a.value.shape
    return _make(a.tape, a.value.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a: Node) -> Node:
    return _make(a.tape, a.value.T, (a,), lambda g: (g.T,), "transpose")


# -- reductions ------------------------------------------------------------


def sum(a: Node, axis=None) -> Node:  # noqa: A001 - mirrors numpy
    shape = a.value.shape

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _make(a.tape, np.asarray(np.sum(a.value, axis=axis)), (a,), bw, "sum")


def logsumexp_node(x, axis=None) -> Node:
    """Log-sum-exp over an axis of a node, or over a list of scalar nodes."""
    if not isinstance(x, Node):
        x = stack(list(x))
    xv = x.value
    y = logsumexp(xv, axis=axis)

    def bw(g):
        w = softmax_weights(xv, axis=axis)
        gg = g if axis is None else np.expand_dims(g, axis)
        return (w * gg,)

    return _make(x.tape, np.asarray(y), (x,), bw, "logsumexp")


log_sum_exp_node = logsumexp_node


def log_softmax(x: Node, axis: int = -1) -> Node:
    xv = x.value
    y = xv - logsumexp(xv, axis=axis, keepdims=True)

    def bw(g):
        p = np.exp(y)
        return (g - p * np.sum(g, axis=axis, keepdims=True),)

    return _make(x.tape, y, (x,), bw, "log_softmax")


def custom(tape: Tape, value, parents: Sequence[Node], backward_fn: Callable, op: str) -> Node:
    """Escape hatch for composite primitives with a hand-written backward rule."""
    return _make(tape, np.asarray(value, dtype=np.float64), parents, backward_fn, op)
