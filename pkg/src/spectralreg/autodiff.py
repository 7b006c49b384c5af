"""Tape-style automatic differentiation over float64 numpy arrays.

Every operation builds a ``Node`` that remembers its parents, so a
computation is its own recording. ``grad`` runs reverse mode: it seeds an
output adjoint and sweeps the recording backwards. The adjoint arithmetic
is expressed with the same node-building operations, which makes gradients
differentiable again (needed for parameter gradients of VJP/JVP/HVP-based
losses). ``pushforward`` runs forward mode over an existing recording and
is the basis for Jacobian- and Hessian-vector products.

Nodes are immutable once created; sweeps never mutate the graph, so
concurrent differentiation of disjoint recordings is safe.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError

Array = np.ndarray


def _as_array(x) -> Array:
    return np.asarray(x, dtype=np.float64)


class Node:
    """One recorded value: a float64 array plus provenance."""

    __slots__ = ("value", "parents", "op", "requires_grad")

    def __init__(self, value, parents=(), op=None, requires_grad=False):
        self.value = value
        self.parents = parents
        self.op = op
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    def detach(self) -> "Node":
        """Same value, no history: gradients never flow through."""
        return Node(self.value)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        op = type(self.op).__name__ if self.op is not None else "leaf"
        return f"Node({op}, shape={self.shape}, requires_grad={self.requires_grad})"


def constant(x) -> Node:
    """Wrap an array as a node that never receives gradients."""
    return x if isinstance(x, Node) else Node(_as_array(x))


def leaf(x) -> Node:
    """Wrap an array as a differentiation target."""
    return Node(_as_array(x), requires_grad=True)


def _make(value, parents, op) -> Node:
    rg = any(p.requires_grad for p in parents)
    return Node(value, parents, op, rg)


# --------------------------------------------------------------------------
# operations
#
# Each op provides:
#   backward(node, grad, needs) -> per-parent adjoint contributions (Node or
#       None), skipping parents whose ``needs`` flag is False;
#   pushforward(node, tangents) -> tangent Node given per-parent tangents
#       (None meaning an identically-zero tangent).
# Both rules build Nodes so that their outputs stay differentiable.
# --------------------------------------------------------------------------


def _unbroadcast(g: Node, shape) -> Node:
    """Reduce a broadcast gradient back to the operand's shape."""
    shape = tuple(shape)
    if g.shape == shape:
        return g
    extra = len(g.shape) - len(shape)
    if extra > 0:
        g = reduce_sum(g, axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = reduce_sum(g, axis=axes, keepdims=True)
    if g.shape != shape:
        g = reshape(g, shape)
    return g


def _match(t: Node, node: Node) -> Node:
    return t if t.shape == node.shape else broadcast_to(t, node.shape)


class _Add:
    def backward(self, node, grad, needs):
        a, b = node.parents
        return (
            _unbroadcast(grad, a.shape) if needs[0] else None,
            _unbroadcast(grad, b.shape) if needs[1] else None,
        )

    def pushforward(self, node, tangents):
        ta, tb = tangents
        if ta is None:
            return _match(tb, node)
        if tb is None:
            return _match(ta, node)
        return add(ta, tb)


class _Sub:
    def backward(self, node, grad, needs):
        a, b = node.parents
        return (
            _unbroadcast(grad, a.shape) if needs[0] else None,
            _unbroadcast(neg(grad), b.shape) if needs[1] else None,
        )

    def pushforward(self, node, tangents):
        ta, tb = tangents
        if ta is None:
            return _match(neg(tb), node)
        if tb is None:
            return _match(ta, node)
        return sub(ta, tb)


class _Neg:
    def backward(self, node, grad, needs):
        return (neg(grad),)

    def pushforward(self, node, tangents):
        return neg(tangents[0])


class _Mul:
    def backward(self, node, grad, needs):
        a, b = node.parents
        ga = _unbroadcast(mul(grad, b), a.shape) if needs[0] else None
        gb = _unbroadcast(mul(grad, a), b.shape) if needs[1] else None
        return ga, gb

    def pushforward(self, node, tangents):
        a, b = node.parents
        ta, tb = tangents
        out = None
        if ta is not None:
            out = mul(ta, b)
        if tb is not None:
            term = mul(a, tb)
            out = term if out is None else add(out, term)
        return _match(out, node)


class _MatMul:
    def backward(self, node, grad, needs):
        a, b = node.parents
        ga = matmul(grad, transpose(b)) if needs[0] else None
        gb = matmul(transpose(a), grad) if needs[1] else None
        return ga, gb

    def pushforward(self, node, tangents):
        a, b = node.parents
        ta, tb = tangents
        out = None
        if ta is not None:
            out = matmul(ta, b)
        if tb is not None:
            term = matmul(a, tb)
            out = term if out is None else add(out, term)
        return out


class _Transpose:
    def backward(self, node, grad, needs):
        return (transpose(grad),)

    def pushforward(self, node, tangents):
        return transpose(tangents[0])


class _Reshape:
    def __init__(self, shape):
        self.shape = shape

    def backward(self, node, grad, needs):
        return (reshape(grad, node.parents[0].shape),)

    def pushforward(self, node, tangents):
        return reshape(tangents[0], self.shape)


class _BroadcastTo:
    def __init__(self, shape):
        self.shape = shape

    def backward(self, node, grad, needs):
        return (_unbroadcast(grad, node.parents[0].shape),)

    def pushforward(self, node, tangents):
        return broadcast_to(tangents[0], self.shape)


class _ReduceSum:
    def __init__(self, axis, keepdims):
        self.axis = axis
        self.keepdims = keepdims

    def _kept_shape(self, in_shape):
        if self.axis is None:
            return (1,) * len(in_shape)
        axes = self.axis if isinstance(self.axis, tuple) else (self.axis,)
        axes = tuple(a % len(in_shape) for a in axes)
        return tuple(1 if i in axes else s for i, s in enumerate(in_shape))

    def backward(self, node, grad, needs):
        (a,) = node.parents
        if not self.keepdims:
            grad = reshape(grad, self._kept_shape(a.shape))
        return (broadcast_to(grad, a.shape),)

    def pushforward(self, node, tangents):
        return reduce_sum(tangents[0], axis=self.axis, keepdims=self.keepdims)


class _PowConst:
    def __init__(self, exponent):
        self.exponent = exponent

    def backward(self, node, grad, needs):
        (a,) = node.parents
        return (mul(grad, mul(self.exponent, power(a, self.exponent - 1.0))),)

    def pushforward(self, node, tangents):
        (a,) = node.parents
        return mul(tangents[0], mul(self.exponent, power(a, self.exponent - 1.0)))


class _Sigmoid:
    def backward(self, node, grad, needs):
        s = node
        return (mul(grad, mul(s, sub(1.0, s))),)

    def pushforward(self, node, tangents):
        s = node
        return mul(tangents[0], mul(s, sub(1.0, s)))


class _Softplus:
    def __init__(self, beta):
        self.beta = beta

    def backward(self, node, grad, needs):
        (z,) = node.parents
        return (mul(grad, sigmoid(mul(self.beta, z))),)

    def pushforward(self, node, tangents):
        (z,) = node.parents
        return mul(tangents[0], sigmoid(mul(self.beta, z)))


_ADD = _Add()
_SUB = _Sub()
_NEG = _Neg()
_MUL = _Mul()
_MATMUL = _MatMul()
_TRANSPOSE = _Transpose()
_SIGMOID = _Sigmoid()


def add(a, b) -> Node:
    a, b = constant(a), constant(b)
    return _make(a.value + b.value, (a, b), _ADD)


def sub(a, b) -> Node:
    a, b = constant(a), constant(b)
    return _make(a.value - b.value, (a, b), _SUB)


def neg(a) -> Node:
    a = constant(a)
    return _make(-a.value, (a,), _NEG)


def mul(a, b) -> Node:
    a, b = constant(a), constant(b)
    return _make(a.value * b.value, (a, b), _MUL)


def matmul(a, b) -> Node:
    a, b = constant(a), constant(b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise DimensionError(f"matmul expects 2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shapes do not conform: {a.shape} @ {b.shape}")
    return _make(a.value @ b.value, (a, b), _MATMUL)


def transpose(a) -> Node:
    a = constant(a)
    if a.value.ndim != 2:
        raise DimensionError(f"transpose expects a 2-d operand, got {a.shape}")
    return _make(a.value.T, (a,), _TRANSPOSE)


def reshape(a, shape) -> Node:
    a = constant(a)
    shape = tuple(shape)
    return _make(a.value.reshape(shape), (a,), _Reshape(shape))


def broadcast_to(a, shape) -> Node:
    a = constant(a)
    shape = tuple(shape)
    return _make(np.broadcast_to(a.value, shape).copy(), (a,), _BroadcastTo(shape))


def reduce_sum(a, axis=None, keepdims=False) -> Node:
    a = constant(a)
    value = np.sum(a.value, axis=axis, keepdims=keepdims)
    return _make(np.asarray(value), (a,), _ReduceSum(axis, keepdims))


def power(a, exponent: float) -> Node:
    a = constant(a)
    return _make(a.value ** exponent, (a,), _PowConst(float(exponent)))


def sqrt(a) -> Node:
    return power(a, 0.5)


def _sigmoid_value(z: Array) -> Array:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(a) -> Node:
    a = constant(a)
    return _make(_sigmoid_value(a.value), (a,), _SIGMOID)


def softplus(a, beta: float = 1.0) -> Node:
    """Numerically stable softplus(z) = log(1 + exp(beta*z)) / beta.

    Computed as max(z, 0) + log1p(exp(-|beta*z|)) / beta so it never
    overflows for large |z|.
    """
    a = constant(a)
    z = a.value
    value = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(beta * z))) / beta
    return _make(value, (a,), _Softplus(float(beta)))


def mean(a) -> Node:
    """Mean over all entries."""
    a = constant(a)
    return mul(reduce_sum(a), 1.0 / a.value.size)


def row_norms(a) -> Node:
    """Euclidean norm of each row of a 2-d node."""
    return sqrt(reduce_sum(mul(a, a), axis=1))


# --------------------------------------------------------------------------
# sweeps
# --------------------------------------------------------------------------


def _toposort(roots) -> list[Node]:
    """Parents-first ordering of every node reachable from ``roots``."""
    order: list[Node] = []
    seen: set[int] = set()
    stack = [(r, False) for r in roots]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def grad(output: Node, wrt, seed=None) -> list[Node]:
    """Adjoints of ``output`` with respect to each node in ``wrt``.

    ``seed`` is the output adjoint (default: all-ones, the usual choice
    for scalar or row-wise-scalar outputs). The returned nodes belong to
    the same recording and may be differentiated again.
    """
    wrt = list(wrt)
    order = _toposort([output])
    needed = {id(w) for w in wrt}
    for node in order:
        if any(id(p) in needed for p in node.parents):
            needed.add(id(node))
    seed = constant(np.ones_like(output.value) if seed is None else seed)
    if seed.shape != output.shape:
        raise DimensionError(f"seed shape {seed.shape} != output shape {output.shape}")
    adjoint: dict[int, Node] = {id(output): seed}
    for node in reversed(order):
        g = adjoint.get(id(node))
        if g is None or node.op is None or id(node) not in needed:
            continue
        needs = tuple(id(p) in needed for p in node.parents)
        for p, contribution in zip(node.parents, node.op.backward(node, g, needs)):
            if contribution is None:
                continue
            held = adjoint.get(id(p))
            adjoint[id(p)] = contribution if held is None else add(held, contribution)
    return [
        adjoint.get(id(w)) or constant(np.zeros_like(w.value))
        for w in wrt
    ]


def pushforward(targets, seeds) -> list[Node]:
    """Forward-mode tangents of ``targets`` given ``seeds``.

    ``seeds`` is a sequence of (source node, tangent) pairs; any other
    leaf carries a zero tangent. Works over recordings that include
    adjoint nodes, which is how Hessian-vector products are formed
    (forward mode over a reverse-mode sweep).
    """
    targets = list(targets)
    order = _toposort(targets)
    tangent: dict[int, Node] = {}
    for source, t in seeds:
        t = constant(t)
        if t.shape != source.shape:
            raise DimensionError(
                f"tangent shape {t.shape} != source shape {source.shape}"
            )
        tangent[id(source)] = t
    for node in order:
        if id(node) in tangent or node.op is None:
            continue
        ts = [tangent.get(id(p)) for p in node.parents]
        if all(t is None for t in ts):
            continue
        tangent[id(node)] = node.op.pushforward(node, ts)
    out = []
    for t in targets:
        held = tangent.get(id(t))
        out.append(held if held is not None else constant(np.zeros_like(t.value)))
    return out
