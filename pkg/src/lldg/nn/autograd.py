"""Reverse-mode automatic differentiation over numpy arrays.

Each :class:`Tensor` produced by an operation remembers its parents and a
closure that pushes its gradient back to them. :meth:`Tensor.backward`
orders the recorded graph topologically and runs those closures once each,
in reverse.

Gradient semantics: leaf gradients accumulate across ``backward`` calls
until they are reset (optimizers zero them at the start of each step);
interior gradients are recomputed on every call.
"""
import threading
from contextlib import contextmanager

import numpy as np

__all__ = [
    "Tensor",
    "tensor",
    "matmul",
    "linear",
    "conv1d",
    "tanh",
    "relu",
    "prelu",
    "gelu",
    "softmax",
    "layer_norm",
    "straight_through",
    "activation",
    "no_grad",
]

_state = threading.local()


def _grad_enabled():
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording in the current thread."""
    prev = _grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_op")
    # make numpy defer to our reflected operators (ndarray + Tensor -> Tensor)
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _op=""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = _parents
        self._backward = None
        self._op = _op

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, op={self._op or 'leaf'})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def _accumulate(self, g):
        g = _unbroadcast(np.asarray(g, dtype=np.float64), self.data.shape)
        # gradients are never modified in place, so aliasing g is safe
        if self.grad is None:
            self.grad = g
        else:
            self.grad = self.grad + g

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        other = _lift(other)
        out = _node(self.data + other.data, (self, other), "add")
        if out.requires_grad:
            def _backward(g):
                _push(self, g)
                _push(other, g)
            out._backward = _backward
        return out

    __radd__ = __add__

    def __neg__(self):
        out = _node(-self.data, (self,), "neg")
        if out.requires_grad:
            out._backward = lambda g: _push(self, -g)
        return out

    def __sub__(self, other):
        return self + (-_lift(other))

    def __rsub__(self, other):
        return _lift(other) + (-self)

    def __mul__(self, other):
        other = _lift(other)
        out = _node(self.data * other.data, (self, other), "mul")
        if out.requires_grad:
            def _backward(g):
                _push(self, g * other.data)
                _push(other, g * self.data)
            out._backward = _backward
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return self * other ** -1
        return self * (1.0 / other)

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise TypeError("only constant powers are supported")
        out = _node(self.data**p, (self,), f"pow{p}")
        if out.requires_grad:
            out._backward = lambda g: _push(self, g * p * self.data ** (p - 1))
        return out

    def __rtruediv__(self, other):
        return _lift(other) * self**-1

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def abs(self):
        out = _node(np.abs(self.data), (self,), "abs")
        if out.requires_grad:
            out._backward = lambda g: _push(self, g * np.sign(self.data))
        return out

    def square(self):
        return self**2

    # -- reductions and shape ---------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out = _node(self.data.sum(axis=axis, keepdims=keepdims), (self,), "sum")
        if out.requires_grad:
            def _backward(g):
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                _push(self, np.broadcast_to(g, self.data.shape))
            out._backward = _backward
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod([self.data.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = _node(self.data.reshape(shape), (self,), "reshape")
        if out.requires_grad:
            out._backward = lambda g: _push(self, g.reshape(self.data.shape))
        return out

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        axes = axes or tuple(reversed(range(self.ndim)))
        inverse = np.argsort(axes)
        out = _node(np.transpose(self.data, axes), (self,), "transpose")
        if out.requires_grad:
            out._backward = lambda g: _push(self, np.transpose(g, inverse))
        return out

    def __getitem__(self, idx):
        out = _node(self.data[idx], (self,), "getitem")
        if out.requires_grad:
            def _backward(g):
                full = np.zeros_like(self.data)
                full[idx] += g
                _push(self, full)
            out._backward = _backward
        return out

    def swapaxes(self, a, b):
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return self.transpose(axes)

    # -- graph traversal --------------------------------------------------

    def backward(self):
        """Populate ``.grad`` on every tensor that feeds this scalar."""
        if self.data.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {self.shape}")
        order = _topological_order(self)
        for node in order:
            if node._parents:
                node.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _lift(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, op):
    requires = _grad_enabled() and any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=requires, _parents=parents if requires else (), _op=op)


def _push(t, g):
    if t.requires_grad:
        t._accumulate(g)


def _topological_order(root):
    order, seen = [], set()
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
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def tensor(data, requires_grad=False, name=None):
    return Tensor(data, requires_grad=requires_grad, name=name)


# -- linear algebra -------------------------------------------------------


def matmul(a, b):
    a, b = _lift(a), _lift(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands need at least two axes")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = _node(a.data @ b.data, (a, b), "matmul")
    if out.requires_grad:
        def _backward(g):
            if a.requires_grad:
                _push(a, g @ np.swapaxes(b.data, -1, -2))
            if b.requires_grad:
                if b.ndim == 2:
                    # shared weight: fold the batch axes into one matmul
                    k = a.shape[-1]
                    _push(b, a.data.reshape(-1, k).T @ g.reshape(-1, g.shape[-1]))
                else:
                    _push(b, np.swapaxes(a.data, -1, -2) @ g)
        out._backward = _backward
    return out


def linear(x, w, b=None):
    """``x @ w + b`` with ``w`` of shape ``(in, out)``."""
    x, w = _lift(x), _lift(w)
    if x.shape[-1] != w.shape[0]:
        raise ValueError(f"linear: input has {x.shape[-1]} features, weight expects {w.shape[0]}")
    y = matmul(x, w)
    if b is not None:
        b = _lift(b)
        if b.shape != (w.shape[1],):
            raise ValueError(f"linear: bias shape {b.shape} does not match {w.shape[1]} outputs")
        y = y + b
    return y


def conv1d(x, w, b=None):
    """Same-length 1D cross-correlation with zero padding.

    ``x`` is ``(batch, in_channels, length)``, ``w`` is
    ``(out_channels, in_channels, k)`` with odd ``k``.
    """
    x, w = _lift(x), _lift(w)
    if x.ndim != 3 or w.ndim != 3:
        raise ValueError("conv1d expects x (batch, channels, length) and w (out, in, k)")
    n, cin, length = x.shape
    cout, cin_w, k = w.shape
    if cin != cin_w:
        raise ValueError(f"conv1d: input has {cin} channels, kernel expects {cin_w}")
    if k % 2 == 0:
        raise ValueError(f"conv1d kernel size must be odd, got {k}")
    if length < k:
        raise ValueError(f"conv1d: length {length} is shorter than kernel size {k}")
    pad = (k - 1) // 2
    # channels-last im2col: cols[n, t, j*cin + c] = xpad[n, t + j, c]
    xp = np.zeros((n, length + 2 * pad, cin))
    xp[:, pad:pad + length, :] = x.data.transpose(0, 2, 1)
    cols = np.concatenate([xp[:, j:j + length, :] for j in range(k)], axis=2)
    wmat = w.data.transpose(0, 2, 1).reshape(cout, k * cin)
    y = (cols @ wmat.T).transpose(0, 2, 1)
    parents = (x, w)
    if b is not None:
        b = _lift(b)
        y = y + b.data[None, :, None]
        parents = (x, w, b)
    out = _node(y, parents, "conv1d")
    if out.requires_grad:
        def _backward(g):
            g2 = np.ascontiguousarray(g.transpose(0, 2, 1)).reshape(-1, cout)
            if w.requires_grad:
                dw = (g2.T @ cols.reshape(-1, k * cin)).reshape(cout, k, cin)
                _push(w, dw.transpose(0, 2, 1))
            if b is not None:
                _push(b, g2.sum(axis=0))
            if x.requires_grad:
                dcols = (g2 @ wmat).reshape(n, length, k * cin)
                dxp = np.zeros_like(xp)
                for j in range(k):
                    dxp[:, j:j + length, :] += dcols[:, :, j * cin:(j + 1) * cin]
                _push(x, dxp[:, pad:pad + length, :].transpose(0, 2, 1))
        out._backward = _backward
    return out


# -- activations ----------------------------------------------------------


def tanh(x):
    x = _lift(x)
    y = np.tanh(x.data)
    out = _node(y, (x,), "tanh")
    if out.requires_grad:
        out._backward = lambda g: _push(x, g * (1.0 - y * y))
    return out


def relu(x):
    x = _lift(x)
    mask = x.data > 0
    out = _node(np.where(mask, x.data, 0.0), (x,), "relu")
    if out.requires_grad:
        out._backward = lambda g: _push(x, g * mask)
    return out


def prelu(x, alpha):
    """Leaky rectifier with a learnable negative slope ``alpha``."""
    x, alpha = _lift(x), _lift(alpha)
    mask = x.data > 0
    out = _node(np.where(mask, x.data, alpha.data * x.data), (x, alpha), "prelu")
    if out.requires_grad:
        def _backward(g):
            _push(x, g * np.where(mask, 1.0, alpha.data))
            if alpha.requires_grad:
                _push(alpha, np.sum(g * np.where(mask, 0.0, x.data)).reshape(alpha.shape))
        out._backward = _backward
    return out


_GELU_K = np.sqrt(2.0 / np.pi)


def gelu(x):
    """GELU, tanh approximation."""
    x = _lift(x)
    x2 = x.data * x.data
    t = np.tanh(_GELU_K * x.data * (1.0 + 0.044715 * x2))
    out = _node(0.5 * x.data * (1.0 + t), (x,), "gelu")
    if out.requires_grad:
        def _backward(g):
            du = _GELU_K * (1.0 + 3 * 0.044715 * x2)
            _push(x, g * (0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t * t) * du))
        out._backward = _backward
    return out


def softmax(x, axis=-1):
    x = _lift(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    out = _node(y, (x,), "softmax")
    if out.requires_grad:
        out._backward = lambda g: _push(x, y * (g - np.sum(g * y, axis=axis, keepdims=True)))
    return out


def activation(kind, x, alpha=0.25):
    """Apply an activation by name: tanh, relu, prelu or softmax."""
    if kind == "tanh":
        return tanh(x)
    if kind == "relu":
        return relu(x)
    if kind == "prelu":
        return prelu(x, alpha)
    if kind == "softmax":
        return softmax(x)
    raise ValueError(f"unknown activation {kind!r}")


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize over the last axis, then scale and shift."""
    x, gamma, beta = _lift(x), _lift(gamma), _lift(beta)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = _node(gamma.data * xhat + beta.data, (x, gamma, beta), "layer_norm")
    if out.requires_grad:
        def _backward(g):
            _push(gamma, g * xhat)
            _push(beta, g)
            if x.requires_grad:
                d = g * gamma.data
                n = x.shape[-1]
                dx = inv / n * (
                    n * d - d.sum(axis=-1, keepdims=True) - xhat * (d * xhat).sum(axis=-1, keepdims=True)
                )
                _push(x, dx)
        out._backward = _backward
    return out


def straight_through(x, fn):
    """Forward ``fn(x)``; backward passes the gradient to ``x`` unchanged."""
    x = _lift(x)
    y = np.asarray(fn(x.data), dtype=np.float64)
    if y.shape != x.shape:
        raise ValueError("straight-through transform must preserve shape")
    out = _node(y, (x,), "straight_through")
    if out.requires_grad:
        out._backward = lambda g: _push(x, g)
    return out
