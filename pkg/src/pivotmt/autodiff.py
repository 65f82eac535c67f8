"""Minimal dense-tensor reverse-mode automatic differentiation.

Exactly the operation set the models need: matmul, add (with bias-row
broadcast as the single broadcasting exception), elementwise multiply,
tanh, sigmoid, hinge max(0, .), dot product, l2 normalization, embedding
row lookup, softmax cross-entropy, sum/mean reductions, concatenate and
slice. Values are numpy arrays; the graph is implicit in each Tensor's
input references and is walked once per backward call.

Gradients follow a reset-then-accumulate policy: backward() zeroes the
gradients of every node reachable from the loss before accumulating, so
calling it twice yields identical (not doubled) gradients.

Precision is a process-global mode: float32 for training (the default),
float64 for gradient verification.
"""

from __future__ import annotations

import contextlib

import numpy as np

from .errors import ContractError, DegenerateVectorError, ShapeError

EPS_NORM = 1e-12

_PRECISION_BITS = 32
_DTYPES = {32: np.float32, 64: np.float64}


def set_precision(bits: int) -> None:
    global _PRECISION_BITS
    if bits not in _DTYPES:
        raise ContractError(f"precision must be 32 or 64, got {bits}")
    _PRECISION_BITS = bits


def precision_bits() -> int:
    return _PRECISION_BITS


def active_dtype():
    return _DTYPES[_PRECISION_BITS]


@contextlib.contextmanager
def precision(bits: int):
    previous = _PRECISION_BITS
    set_precision(bits)
    try:
        yield
    finally:
        set_precision(previous)


class Tensor:
    """A value node in the computation graph.

    Leaf tensors hold data (parameters when requires_grad is set); op
    results additionally hold references to their inputs and a closure
    that accumulates gradients into them.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_inputs", "_backward", "_op")

    def __init__(self, data, requires_grad=False, name=None, _inputs=(), _op=None, _backward=None):
        self.data = np.asarray(data, dtype=active_dtype())
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._inputs = _inputs
        self._op = _op
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def backward(self) -> "Graph":
        return backward(self)

    def __repr__(self):
        tag = self.name or self._op or "tensor"
        return f"Tensor({tag}, shape={self.data.shape})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other):
        return scale(self, float(other))

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(data, name=None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def constant(data, name=None) -> Tensor:
    return Tensor(data, requires_grad=False, name=name)


class Graph:
    """Topologically ordered operation records reachable from a root node.

    Non-leaf nodes appear after all of their inputs; backward walks the
    list once, in reverse.
    """

    def __init__(self, nodes):
        self.nodes = nodes

    @property
    def parameters(self):
        return [n for n in self.nodes if n.requires_grad and not n._inputs]

    @classmethod
    def trace(cls, root: Tensor) -> "Graph":
        order = []
        seen = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for inp in node._inputs:
                if inp.requires_grad and id(inp) not in seen:
                    stack.append((inp, False))
        return cls(order)


def backward(loss: Tensor) -> Graph:
    """Accumulate d(loss)/d(node) into .grad of every reachable node.

    Gradients are reset first, so repeated calls are idempotent.
    """
    if loss.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")
    graph = Graph.trace(loss)
    for node in graph.nodes:
        node.grad = np.zeros_like(node.data)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(graph.nodes):
        if node._backward is not None:
            node._backward()
    return graph


def _result(data, inputs, op, backward_fn):
    needs = any(t.requires_grad for t in inputs)
    if not needs:
        return Tensor(data, _op=op)
    return Tensor(data, requires_grad=True, _inputs=tuple(inputs), _op=op, _backward=backward_fn)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else constant(x)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise add. The one broadcast allowed: a bias row (1, d) onto (n, d)."""
    a, b = _as_tensor(a), _as_tensor(b)
    bias_row = (
        a.data.ndim == 2
        and b.data.ndim == 2
        and b.data.shape[0] == 1
        and a.data.shape[1] == b.data.shape[1]
        and a.data.shape[0] != 1
    )
    if a.data.shape != b.data.shape and not bias_row:
        raise ShapeError(f"add: shapes {a.data.shape} and {b.data.shape} do not conform")
    out = _result(a.data + b.data, (a, b), "add", None)

    def bw():
        if a.requires_grad:
            a.grad += out.grad
        if b.requires_grad:
            if bias_row:
                b.grad += out.grad.sum(axis=0, keepdims=True)
            else:
                b.grad += out.grad

    out._backward = bw if out.requires_grad else None
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"sub: shapes {a.data.shape} and {b.data.shape} do not conform")
    out = _result(a.data - b.data, (a, b), "sub", None)

    def bw():
        if a.requires_grad:
            a.grad += out.grad
        if b.requires_grad:
            b.grad -= out.grad

    out._backward = bw if out.requires_grad else None
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product; shapes must match exactly."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul: shapes {a.data.shape} and {b.data.shape} do not conform")
    out = _result(a.data * b.data, (a, b), "mul", None)

    def bw():
        if a.requires_grad:
            a.grad += out.grad * b.data
        if b.requires_grad:
            b.grad += out.grad * a.data

    out._backward = bw if out.requires_grad else None
    return out


def scale(a: Tensor, s: float) -> Tensor:
    a = _as_tensor(a)
    s = float(s)
    out = _result(a.data * s, (a,), "scale", None)

    def bw():
        if a.requires_grad:
            a.grad += out.grad * s

    out._backward = bw if out.requires_grad else None
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: shapes {a.data.shape} and {b.data.shape} do not conform")
    out = _result(a.data @ b.data, (a, b), "matmul", None)

    def bw():
        if a.requires_grad:
            a.grad += out.grad @ b.data.T
        if b.requires_grad:
            b.grad += a.data.T @ out.grad

    out._backward = bw if out.requires_grad else None
    return out


def transpose(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: expected a matrix, got shape {a.data.shape}")
    out = _result(a.data.T.copy(), (a,), "transpose", None)

    def bw():
        if a.requires_grad:
            a.grad += out.grad.T

    out._backward = bw if out.requires_grad else None
    return out


def tanh(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out = _result(np.tanh(a.data), (a,), "tanh", None)

    def bw():
        if a.requires_grad:
            a.grad += out.grad * (1.0 - out.data * out.data)

    out._backward = bw if out.requires_grad else None
    return out


def sigmoid(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    x = a.data
    pos = x >= 0
    value = np.empty_like(x)
    value[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    value[~pos] = ex / (1.0 + ex)
    out = _result(value, (a,), "sigmoid", None)

    def bw():
        if a.requires_grad:
            a.grad += out.grad * out.data * (1.0 - out.data)

    out._backward = bw if out.requires_grad else None
    return out


def relu(a: Tensor) -> Tensor:
    """Hinge max(0, x). The subgradient at 0 is taken as 0 (one-sided)."""
    a = _as_tensor(a)
    out = _result(np.maximum(a.data, 0.0), (a,), "relu", None)

    def bw():
        if a.requires_grad:
            a.grad += out.grad * (a.data > 0)

    out._backward = bw if out.requires_grad else None
    return out


def total(a: Tensor) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    a = _as_tensor(a)
    out = _result(np.asarray(a.data.sum()), (a,), "sum", None)

    def bw():
        if a.requires_grad:
            a.grad += out.grad

    out._backward = bw if out.requires_grad else None
    return out


def mean(a: Tensor) -> Tensor:
    """Mean of all elements, as a scalar tensor."""
    a = _as_tensor(a)
    n = a.data.size
    out = _result(np.asarray(a.data.sum() / n), (a,), "mean", None)

    def bw():
        if a.requires_grad:
            a.grad += out.grad / n

    out._backward = bw if out.requires_grad else None
    return out


def dot(u: Tensor, v: Tensor) -> Tensor:
    u, v = _as_tensor(u), _as_tensor(v)
    if u.data.ndim != 1 or v.data.ndim != 1 or u.data.shape != v.data.shape:
        raise ShapeError(f"dot: shapes {u.data.shape} and {v.data.shape} do not conform")
    out = _result(np.asarray(u.data @ v.data), (u, v), "dot", None)

    def bw():
        if u.requires_grad:
            u.grad += out.grad * v.data
        if v.requires_grad:
            v.grad += out.grad * u.data

    out._backward = bw if out.requires_grad else None
    return out


def concat(tensors, axis: int = 1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: no inputs")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {[t.data.shape for t in tensors]} along axis {axis}") from exc
    out = _result(data, tuple(tensors), "concat", None)
    offsets = np.cumsum([0] + [t.data.shape[axis] for t in tensors])

    def bw():
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                index = [slice(None)] * t.data.ndim
                index[axis] = slice(start, stop)
                t.grad += out.grad[tuple(index)]

    out._backward = bw if out.requires_grad else None
    return out


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice of `length` entries along `axis`."""
    a = _as_tensor(a)
    if axis >= a.data.ndim or start < 0 or start + length > a.data.shape[axis]:
        raise ShapeError(f"narrow: [{start}:{start + length}) on axis {axis} of shape {a.data.shape}")
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    out = _result(a.data[index].copy(), (a,), "narrow", None)

    def bw():
        if a.requires_grad:
            a.grad[index] += out.grad

    out._backward = bw if out.requires_grad else None
    return out


def embedding(table: Tensor, ids) -> Tensor:
    """Row lookup: ids (n,) into a (V, d) table, giving (n, d)."""
    table = _as_tensor(table)
    ids = np.asarray(ids)
    if table.data.ndim != 2 or ids.ndim != 1:
        raise ShapeError(f"embedding: table {table.data.shape}, ids {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise ShapeError(
            f"embedding: id out of range [0, {table.data.shape[0]}) in lookup"
        )
    out = _result(table.data[ids], (table,), "embedding", None)

    def bw():
        if table.requires_grad:
            np.add.at(table.grad, ids, out.grad)

    out._backward = bw if out.requires_grad else None
    return out


def softmax_xent(logits: Tensor, targets) -> Tensor:
    """Per-row -log softmax(logits)[target], shape (n, 1)."""
    logits = _as_tensor(logits)
    targets = np.asarray(targets)
    if logits.data.ndim != 2 or targets.ndim != 1 or targets.shape[0] != logits.data.shape[0]:
        raise ShapeError(f"softmax_xent: logits {logits.data.shape}, targets {targets.shape}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(z.shape[0])
    nll = (lse[:, 0] - z[rows, targets]).reshape(-1, 1)
    out = _result(nll, (logits,), "softmax_xent", None)

    def bw():
        if logits.requires_grad:
            p = np.exp(z - lse)
            p[rows, targets] -= 1.0
            logits.grad += p * out.grad

    out._backward = bw if out.requires_grad else None
    return out


def l2_normalize(a: Tensor) -> Tensor:
    """Scale a vector (1-D) or each row of a matrix (2-D) to unit norm.

    A norm at or below EPS_NORM is an error rather than a silent
    epsilon-add, so degenerate encoders fail loudly.
    """
    a = _as_tensor(a)
    if a.data.ndim == 1:
        norm = np.sqrt((a.data * a.data).sum())
        if norm <= EPS_NORM:
            raise DegenerateVectorError(f"l2_normalize: vector norm {norm!r} below {EPS_NORM}")
        out = _result(a.data / norm, (a,), "l2_normalize", None)

        def bw():
            if a.requires_grad:
                g = out.grad
                a.grad += g / norm - out.data * ((out.data * g).sum() / norm)

        out._backward = bw if out.requires_grad else None
        return out
    if a.data.ndim == 2:
        norms = np.sqrt((a.data * a.data).sum(axis=1, keepdims=True))
        if (norms <= EPS_NORM).any():
            k = int(np.argmin(norms))
            raise DegenerateVectorError(
                f"l2_normalize: row {k} norm {float(norms[k, 0])!r} below {EPS_NORM}"
            )
        out = _result(a.data / norms, (a,), "l2_normalize", None)

        def bw():
            if a.requires_grad:
                g = out.grad
                a.grad += g / norms - out.data * ((out.data * g).sum(axis=1, keepdims=True) / norms)

        out._backward = bw if out.requires_grad else None
        return out
    raise ShapeError(f"l2_normalize: expected vector or matrix, got shape {a.data.shape}")


def finite_difference_check(loss_fn, params, step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    loss_fn must be pure and deterministic; requires 64-bit mode. The
    relative error for each parameter entry is
    |analytic - cd| / max(|analytic|, |cd|, 1e-8).
    """
    if precision_bits() != 64:
        raise ContractError("finite_difference_check requires 64-bit precision mode")
    loss = loss_fn()
    backward(loss)
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]
    worst = 0.0
    for p, grads in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = grads.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            f_plus = float(loss_fn().data.reshape(()))
            flat[i] = original - step
            f_minus = float(loss_fn().data.reshape(()))
            flat[i] = original
            cd = (f_plus - f_minus) / (2.0 * step)
            a = float(gflat[i])
            err = abs(a - cd) / max(abs(a), abs(cd), 1e-8)
            worst = max(worst, err)
    return worst
