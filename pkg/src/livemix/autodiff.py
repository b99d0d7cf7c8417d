"""Minimal reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps a float64 ndarray plus a record of the primitive that
produced it; ``backward()`` walks that record once in reverse topological
order, accumulating vector-Jacobian products into ``.grad``.

Conventions:
  - At the kink of relu / prelu / abs (and of sqrt at zero) the propagated
    subgradient is 0.
  - Inside a ``no_grad()`` block no graph is recorded; forward values are
    computed identically.
"""

from __future__ import annotations

import contextlib

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording within the block (inference mode)."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_vjp", "name")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._vjp = None
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    def item(self) -> float:
        return float(self.value)

    def detach(self) -> "Tensor":
        """A view of the same values with no history (graph truncation point)."""
        return Tensor(self.value)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = self.name or ("param" if self.requires_grad and self._vjp is None else "tensor")
        return f"Tensor({tag}, shape={self.value.shape})"

    # -- operators ---------------------------------------------------------

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
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, index):
        return take(self, index)

    # -- backward ----------------------------------------------------------

    def backward(self, grad=None, free_graph: bool = True):
        """Accumulate gradients of this tensor w.r.t. every reachable leaf.

        Visits each recorded node exactly once in reverse topological order.
        Gradients add onto any existing ``.grad`` (call ``zero_grad`` between
        unrelated passes). ``free_graph`` drops node records afterwards.
        """
        if grad is None:
            if self.value.ndim != 0:
                raise ValueError("backward() without a gradient requires a scalar")
            grad = np.ones_like(self.value)
        else:
            grad = np.asarray(grad, dtype=np.float64)

        order = _topological_order(self)
        self.grad = grad if self.grad is None else self.grad + grad
        for node in reversed(order):
            if node._vjp is None:
                continue
            if node.grad is None:
                continue
            parent_grads = node._vjp(node.grad)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                parent.grad = pg if parent.grad is None else parent.grad + pg
            if free_graph:
                node._parents = ()
                node._vjp = None
                if node is not self:
                    node.grad = None


def _topological_order(root: Tensor):
    """Iterative DFS postorder: every node appears after all of its parents."""
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(value, name: str | None = None) -> Tensor:
    return Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)


def make_op(value, parents, vjp) -> Tensor:
    """Build a tensor from a primitive's forward value and its VJP.

    ``vjp(grad)`` must return one gradient (or None) per parent, each with
    the parent's shape. When grad recording is off, or no parent needs a
    gradient, the record is dropped and a constant tensor is returned.
    """
    parents = tuple(as_tensor(p) for p in parents)
    if not _GRAD_ENABLED or not any(p.requires_grad for p in parents):
        return Tensor(value)
    out = Tensor(value, requires_grad=True)
    out._parents = parents
    out._vjp = vjp
    return out


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- elementwise arithmetic --------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_op(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_op(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_op(
        a.value * b.value,
        (a, b),
        lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.value / b.value
    return make_op(
        out,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.value, a.shape),
            _unbroadcast(-g * out / b.value, b.shape),
        ),
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return make_op(-a.value, (a,), lambda g: (-g,))


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    exponent = float(exponent)
    return make_op(
        a.value**exponent,
        (a,),
        lambda g: (g * exponent * a.value ** (exponent - 1.0),),
    )


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.value)
    safe = np.where(out > 0.0, out, 1.0)
    return make_op(out, (a,), lambda g: (np.where(out > 0.0, 0.5 * g / safe, 0.0),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.value)
    return make_op(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return make_op(np.log(a.value), (a,), lambda g: (g / a.value,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.value)
    return make_op(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = 1.0 / (1.0 + np.exp(-a.value))
    return make_op(out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.value > 0.0
    return make_op(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def prelu(a, slope) -> Tensor:
    """PReLU with a single learnable slope (scalar tensor)."""
    a, slope = as_tensor(a), as_tensor(slope)
    s = float(slope.value)
    pos = a.value > 0.0
    negm = a.value < 0.0
    out = np.where(pos, a.value, s * a.value)

    def vjp(g):
        ga = g * np.where(pos, 1.0, np.where(negm, s, 0.0))
        gs = np.sum(g * a.value * negm)
        return ga, np.asarray(gs)

    return make_op(out, (a, slope), vjp)


def absolute(a) -> Tensor:
    a = as_tensor(a)
    sign = np.sign(a.value)
    return make_op(np.abs(a.value), (a,), lambda g: (g * sign,))


# -- reductions and shape ops -------------------------------------------------


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_op(np.sum(a.value, axis=axis, keepdims=keepdims), (a,), vjp)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = np.mean(a.value, axis=axis, keepdims=keepdims)
    count = a.value.size / max(out.size, 1)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy() / count,)

    return make_op(out, (a,), vjp)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return make_op(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ValueError("transpose expects a 2-D tensor")
    return make_op(a.value.T.copy(), (a,), lambda g: (g.T,))


def take(a, index) -> Tensor:
    """Basic (slice/integer) indexing."""
    a = as_tensor(a)

    def vjp(g):
        out = np.zeros(a.shape)
        np.add.at(out, index, g)
        return (out,)

    return make_op(a.value[index], (a,), vjp)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return make_op(np.concatenate([t.value for t in tensors], axis=axis), tensors, vjp)


def stack_rows(tensors) -> Tensor:
    """Stack 1-D tensors into a matrix (rows)."""
    return concat([reshape(t, (1, -1)) for t in tensors], axis=0)


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    return make_op(
        np.broadcast_to(a.value, shape).copy(),
        (a,),
        lambda g: (_unbroadcast(g, a.shape),),
    )


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("matmul expects 2-D tensors")
    return make_op(
        a.value @ b.value,
        (a, b),
        lambda g: (g @ b.value.T, a.value.T @ g),
    )


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.value - np.max(a.value, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def vjp(g):
        dot = np.sum(g * out, axis=axis, keepdims=True)
        return (out * (g - dot),)

    return make_op(out, (a,), vjp)


# -- structured primitives for the embedder ----------------------------------


def im2col(a, kernel_h: int, kernel_w: int) -> Tensor:
    """Extract kernel patches of a (C, H, W) tensor as rows.

    Output is ((H-kh+1)*(W-kw+1), C*kh*kw) with patches in row-major scan
    order; the 'valid' convolution is then a plain matmul against reshaped
    filters.
    """
    a = as_tensor(a)
    cin, height, width = a.shape
    out_h = height - kernel_h + 1
    out_w = width - kernel_w + 1
    if out_h < 1 or out_w < 1:
        raise ValueError("kernel larger than input")
    windows = np.lib.stride_tricks.sliding_window_view(a.value, (kernel_h, kernel_w), axis=(1, 2))
    cols = windows.transpose(1, 2, 0, 3, 4).reshape(out_h * out_w, cin * kernel_h * kernel_w)

    def vjp(g):
        patches = g.reshape(out_h, out_w, cin, kernel_h, kernel_w)
        out = np.zeros(a.shape)
        for i in range(kernel_h):
            for j in range(kernel_w):
                out[:, i : i + out_h, j : j + out_w] += patches[:, :, :, i, j].transpose(2, 0, 1)
        return (out,)

    return make_op(np.ascontiguousarray(cols), (a,), vjp)


def avg_pool2d(a) -> Tensor:
    """2x2 average pooling of a (C, H, W) tensor; trailing odd row/col dropped."""
    a = as_tensor(a)
    cin, height, width = a.shape
    he, we = (height // 2) * 2, (width // 2) * 2
    pooled = a.value[:, :he, :we].reshape(cin, he // 2, 2, we // 2, 2).mean(axis=(2, 4))

    def vjp(g):
        out = np.zeros(a.shape)
        out[:, :he, :we] = np.repeat(np.repeat(g, 2, axis=1), 2, axis=2) / 4.0
        return (out,)

    return make_op(pooled, (a,), vjp)


# -- composed helpers ---------------------------------------------------------


def linear(x, weight, bias) -> Tensor:
    """x @ weight + bias for a 2-D x (rows are items)."""
    return add(matmul(x, weight), bias)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Row-wise layer normalization of a 2-D tensor."""
    mu = tmean(x, axis=-1, keepdims=True)
    centered = sub(x, mu)
    var = tmean(mul(centered, centered), axis=-1, keepdims=True)
    normed = div(centered, sqrt(add(var, Tensor(eps))))
    return add(mul(normed, gain), bias)


def frobenius_norm(a) -> Tensor:
    return sqrt(tsum(mul(a, a)))
