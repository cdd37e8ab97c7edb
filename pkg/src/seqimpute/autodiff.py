"""Dense 2D float64 tensors with a define-by-run reverse-mode tape.

Tensors are (rows, cols) arrays; batches live in rows, features in columns.
Every differentiable op records its parents and a backprop closure, so a
fresh graph is built per roll-out and torn down afterwards. Binary ops
accept equal shapes or a (1, cols) bias row broadcast against (rows, cols).
"""

import numpy as np


class ShapeMismatch(ValueError):
    pass


class DomainError(ValueError):
    pass


def _as_matrix(values):
    a = np.asarray(values, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    elif a.ndim != 2:
        raise ShapeMismatch(f"tensors are 2D; got array of rank {a.ndim}")
    return a


class Tensor:
    """One tape node: a value, its parents, and how to push adjoints back."""

    __slots__ = ("data", "grad", "requires_grad", "name", "parents", "_backprop")

    def __init__(self, values, requires_grad=False, name=None, parents=(), backprop=None):
        self.data = values if isinstance(values, np.ndarray) else _as_matrix(values)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self.parents = parents
        self._backprop = backprop

    @property
    def shape(self):
        return self.data.shape

    @property
    def rows(self):
        return self.data.shape[0]

    @property
    def cols(self):
        return self.data.shape[1]

    def __repr__(self):
        tag = self.name or ("param" if self.requires_grad else "const")
        return f"Tensor({tag}, shape={self.data.shape})"

    # operator sugar; scalars route to scale/add_scalar
    def __add__(self, other):
        return add_scalar(self, float(other)) if np.isscalar(other) else add(self, other)

    def __radd__(self, other):
        return add_scalar(self, float(other))

    def __sub__(self, other):
        return add_scalar(self, -float(other)) if np.isscalar(other) else sub(self, other)

    def __mul__(self, other):
        return scale(self, float(other)) if np.isscalar(other) else mul(self, other)

    def __rmul__(self, other):
        return scale(self, float(other))

    def __neg__(self):
        return scale(self, -1.0)

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def relu(self):
        return relu(self)

    def sum(self):
        return sum(self)

    def mean(self):
        return mean(self)

    def sum_rows(self):
        return sum_rows(self)

    def item(self):
        if self.data.shape != (1, 1):
            raise ShapeMismatch(f"item() needs a 1x1 tensor, got {self.data.shape}")
        return float(self.data[0, 0])


def constant(values):
    return Tensor(_as_matrix(values))


def parameter(values, name=None):
    return Tensor(_as_matrix(values).copy(), requires_grad=True, name=name)


def _result(data, parents, backprop):
    track = any(p.requires_grad for p in parents)
    if not track:
        return Tensor(data)
    return Tensor(data, requires_grad=True, parents=tuple(parents), backprop=backprop)


def _accumulate(t, g):
    if t.requires_grad:
        t.grad += g


def _check_binary(a, b, op):
    if a.shape == b.shape:
        return
    if a.cols == b.cols and (a.rows == 1 or b.rows == 1):
        return
    raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} are not broadcastable")


def _unbroadcast(g, shape):
    # adjoint for a (1, cols) operand broadcast over rows
    if g.shape == shape:
        return g
    return g.sum(axis=0, keepdims=True)


# ---------------------------------------------------------------------------
# elementwise ops


def add(a, b):
    _check_binary(a, b, "add")

    def backprop(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), backprop)


def sub(a, b):
    _check_binary(a, b, "sub")

    def backprop(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, -_unbroadcast(g, b.shape))

    return _result(a.data - b.data, (a, b), backprop)


def mul(a, b):
    _check_binary(a, b, "mul")

    def backprop(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), backprop)


def scale(x, k):
    k = float(k)

    def backprop(g):
        _accumulate(x, k * g)

    return _result(k * x.data, (x,), backprop)


def add_scalar(x, c):
    def backprop(g):
        _accumulate(x, g)

    return _result(x.data + float(c), (x,), backprop)


def tanh(x):
    y = np.tanh(x.data)

    def backprop(g):
        _accumulate(x, g * (1.0 - y * y))

    return _result(y, (x,), backprop)


def _sigmoid_stable(x):
    # sign-split so exp never sees a positive argument
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x):
    y = _sigmoid_stable(x.data)

    def backprop(g):
        _accumulate(x, g * y * (1.0 - y))

    return _result(y, (x,), backprop)


def logsigmoid(x):
    """Stable log sigma(x) = -log(1 + exp(-x)); gradient is sigma(-x)."""
    y = -np.logaddexp(0.0, -x.data)

    def backprop(g):
        _accumulate(x, g * _sigmoid_stable(-x.data))

    return _result(y, (x,), backprop)


def exp(x):
    y = np.exp(x.data)

    def backprop(g):
        _accumulate(x, g * y)

    return _result(y, (x,), backprop)


def log(x):
    if np.any(x.data <= 0.0):
        raise DomainError("log: input has non-positive elements")
    y = np.log(x.data)

    def backprop(g):
        _accumulate(x, g / x.data)

    return _result(y, (x,), backprop)


def relu(x):
    y = np.maximum(x.data, 0.0)

    def backprop(g):
        _accumulate(x, g * (x.data > 0.0))

    return _result(y, (x,), backprop)


def clip(x, lo, hi):
    """Hard clamp; adjoints pass through only where the input was in range."""
    y = np.clip(x.data, lo, hi)
    inside = (x.data >= lo) & (x.data <= hi)

    def backprop(g):
        _accumulate(x, g * inside)

    return _result(y, (x,), backprop)


# ---------------------------------------------------------------------------
# matmul, reductions, column surgery


def matmul(a, b):
    if a.cols != b.rows:
        raise ShapeMismatch(f"matmul: {a.shape} x {b.shape} (inner dims {a.cols} != {b.rows})")

    def backprop(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _result(a.data @ b.data, (a, b), backprop)


def sum(x):
    def backprop(g):
        _accumulate(x, np.full(x.shape, g[0, 0]))

    return _result(np.array([[x.data.sum()]]), (x,), backprop)


def mean(x):
    n = x.data.size

    def backprop(g):
        _accumulate(x, np.full(x.shape, g[0, 0] / n))

    return _result(np.array([[x.data.mean()]]), (x,), backprop)


def sum_rows(x):
    def backprop(g):
        _accumulate(x, np.broadcast_to(g, x.shape))

    return _result(x.data.sum(axis=1, keepdims=True), (x,), backprop)


def concat_cols(a, b):
    if a.rows != b.rows:
        raise ShapeMismatch(f"concat_cols: row counts differ ({a.shape} vs {b.shape})")
    split = a.cols

    def backprop(g):
        _accumulate(a, g[:, :split])
        _accumulate(b, g[:, split:])

    return _result(np.concatenate([a.data, b.data], axis=1), (a, b), backprop)


def concat_many(parts):
    out = parts[0]
    for p in parts[1:]:
        out = concat_cols(out, p)
    return out


def slice_cols(x, lo, hi):
    if not (0 <= lo < hi <= x.cols):
        raise ShapeMismatch(f"slice_cols: bounds [{lo}, {hi}) invalid for {x.cols} columns")

    def backprop(g):
        if x.requires_grad:
            x.grad[:, lo:hi] += g

    return _result(x.data[:, lo:hi].copy(), (x,), backprop)


# ---------------------------------------------------------------------------
# backward pass


def backward(root):
    """Reverse sweep from a 1x1 root; returns {leaf tensor: gradient array}.

    Adjoints of every reachable node are zeroed first, so calling this again
    on a rebuilt graph gives identical results.
    """
    if root.shape != (1, 1):
        raise ShapeMismatch(f"backward root must be 1x1, got {root.shape}")

    # iterative topological order over the grad-requiring subgraph
    order = []
    seen = {id(root)}
    stack = [(root, iter(root.parents))]
    while stack:
        node, it = stack[-1]
        advanced = False
        for p in it:
            if p.requires_grad and id(p) not in seen:
                seen.add(id(p))
                stack.append((p, iter(p.parents)))
                advanced = True
                break
        if not advanced:
            order.append(node)
            stack.pop()

    for node in order:
        node.grad = np.zeros(node.shape)
    root.grad = np.ones((1, 1))

    leaves = {}
    for node in reversed(order):
        if node._backprop is not None:
            node._backprop(node.grad)
        elif node.requires_grad:
            leaves[node] = node.grad
    return leaves
