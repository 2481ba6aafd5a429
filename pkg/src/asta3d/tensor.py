"""Dense float64 tensors with define-by-run reverse-mode differentiation."""

from __future__ import annotations

import contextlib

import numpy as np
import scipy.sparse as sp

_grad_enabled = True


class ShapeError(ValueError):
    pass


@contextlib.contextmanager
def no_grad():
    """Build no graph inside the block (inference)."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


class Tensor:
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._parents = _parents
        self._backward = _backward

    @classmethod
    def _op(cls, data, parents, backward):
        track = _grad_enabled and any(p.requires_grad for p in parents)
        if not track:
            return cls(data)
        return cls(data, requires_grad=True, _parents=parents, _backward=backward)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # ---- graph traversal -------------------------------------------------

    def backward(self):
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``.

        Leaves accumulate across calls; interior nodes are overwritten so a
        second pass over the same graph after zeroing leaves is identical.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward needs a scalar root, got shape {self.shape}")
        if not self.requires_grad:
            return
        order, seen = [], set()
        stack = [(self, False)]
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
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._parents:
                node.grad = g
                for p, pg in zip(node._parents, node._backward(g)):
                    if pg is None or not p.requires_grad:
                        continue
                    if id(p) in grads:
                        grads[id(p)] = grads[id(p)] + pg
                    else:
                        grads[id(p)] = pg
            else:
                node.grad = g.copy() if node.grad is None else node.grad + g

    # ---- arithmetic -------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        a, b = self.shape, other.shape
        return Tensor._op(self.data + other.data, (self, other),
                          lambda g: (_unbroadcast(g, a), _unbroadcast(g, b)))

    __radd__ = __add__

    def __sub__(self, other):
        other = as_tensor(other)
        a, b = self.shape, other.shape
        return Tensor._op(self.data - other.data, (self, other),
                          lambda g: (_unbroadcast(g, a), _unbroadcast(-g, b)))

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __mul__(self, other):
        other = as_tensor(other)
        x, y = self.data, other.data
        return Tensor._op(x * y, (self, other),
                          lambda g: (_unbroadcast(g * y, x.shape), _unbroadcast(g * x, y.shape)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        x, y = self.data, other.data
        return Tensor._op(x / y, (self, other),
                          lambda g: (_unbroadcast(g / y, x.shape),
                                     _unbroadcast(-g * x / (y * y), y.shape)))

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __neg__(self):
        return Tensor._op(-self.data, (self,), lambda g: (-g,))

    def __pow__(self, p):
        if isinstance(p, Tensor):
            raise TypeError("tensor exponents are not supported")
        x = self.data
        return Tensor._op(x ** p, (self,), lambda g: (g * p * x ** (p - 1),))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        x = self.data
        def back(g):
            out = np.zeros_like(x)
            np.add.at(out, idx, g)
            return (out,)
        return Tensor._op(x[idx], (self,), back)

    # ---- reductions and reshapes -----------------------------------------

    def sum(self, axis=None, keepdims=False):
        shape = self.shape
        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)
        return Tensor._op(self.data.sum(axis=axis, keepdims=keepdims), (self,), back)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def max(self, axis, keepdims=False):
        """Max along one axis; the gradient goes to the first maximal entry."""
        x = self.data
        arg = np.expand_dims(np.argmax(x, axis=axis), axis)
        out = np.take_along_axis(x, arg, axis=axis)
        def back(g):
            if not keepdims:
                g = np.expand_dims(g, axis)
            full = np.zeros_like(x)
            np.put_along_axis(full, arg, g, axis=axis)
            return (full,)
        return Tensor._op(out if keepdims else np.squeeze(out, axis), (self,), back)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        return Tensor._op(self.data.reshape(shape), (self,), lambda g: (g.reshape(old),))

    def transpose(self, *axes):
        axes = axes or tuple(reversed(range(self.ndim)))
        inv = np.argsort(axes)
        return Tensor._op(self.data.transpose(axes), (self,), lambda g: (g.transpose(inv),))

    @property
    def T(self):
        return self.transpose()

    def exp(self):
        y = np.exp(self.data)
        return Tensor._op(y, (self,), lambda g: (g * y,))

    def log(self):
        x = self.data
        return Tensor._op(np.log(x), (self,), lambda g: (g / x,))

    def sqrt(self):
        y = np.sqrt(self.data)
        return Tensor._op(y, (self,), lambda g: (g * 0.5 / y,))


# ---- free functions ------------------------------------------------------

def matmul(a, b):
    """``a @ b`` for ``a`` of shape [..., k] and a 2-D ``b`` of shape [k, n]."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")
    x, y = a.data, b.data
    def back(g):
        gx = g @ y.T if a.requires_grad else None
        gy = x.reshape(-1, x.shape[-1]).T @ g.reshape(-1, g.shape[-1]) if b.requires_grad else None
        return gx, gy
    return Tensor._op(x @ y, (a, b), back)


_relu_inputs = None  # set by gradcheck.relu_margin to observe kink distances


def relu(x):
    x = as_tensor(x)
    if _relu_inputs is not None:
        _relu_inputs.append(float(np.abs(x.data).min(initial=np.inf)))
    out = np.maximum(x.data, 0.0)
    return Tensor._op(out, (x,), lambda g: (g * (out > 0),))


def linear(x, weight, bias=None):
    """``x @ weight (+ bias)`` as a single graph node."""
    x = as_tensor(x)
    if x.ndim < 2 or weight.ndim != 2 or x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"matmul dimension mismatch: {x.shape} @ {weight.shape}")
    xd, w = x.data, weight.data
    out = xd @ w
    if bias is not None:
        out += bias.data

    def back(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = g @ w.T if x.requires_grad else None
        gw = xd.reshape(-1, xd.shape[-1]).T @ g2
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._op(out, parents, back)


def softmax(x, axis=-1):
    x = as_tensor(x)
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"softmax axis {axis} out of range for shape {x.shape}")
    z = np.exp(x.data - x.data.max(axis=axis, keepdims=True))
    y = z / z.sum(axis=axis, keepdims=True)
    return Tensor._op(y, (x,), lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),))


def log_softmax(x, axis=-1):
    x = as_tensor(x)
    s = x.data - x.data.max(axis=axis, keepdims=True)
    out = s - np.log(np.exp(s).sum(axis=axis, keepdims=True))
    p = np.exp(out)
    return Tensor._op(out, (x,), lambda g: (g - p * g.sum(axis=axis, keepdims=True),))


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    def back(g):
        return tuple(part if t.requires_grad else None
                     for t, part in zip(tensors, np.split(g, cuts, axis=axis)))
    return Tensor._op(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), back)


def take_rows(x, index):
    """Gather ``x[index]`` along axis 0; the backward pass is a sparse scatter-add."""
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    n = x.shape[0]
    def back(g):
        flat = g.reshape(len(index), -1)
        scatter = sp.csr_matrix((np.ones(len(index)), (index, np.arange(len(index)))),
                                shape=(n, len(index)))
        return ((scatter @ flat).reshape(x.shape),)
    return Tensor._op(x.data[index], (x,), back)


def scatter_rows(x, index, n):
    """Place rows of ``x`` at distinct ``index`` positions in an otherwise zero tensor."""
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    out = np.zeros((n,) + x.shape[1:])
    out[index] = x.data
    return Tensor._op(out, (x,), lambda g: (g[index],))


def sparse_matmul(matrix, x):
    """Constant sparse (or dense ndarray) matrix times a tensor."""
    x = as_tensor(x)
    return Tensor._op(np.asarray(matrix @ x.data), (x,), lambda g: (np.asarray(matrix.T @ g),))


def batch_norm(x, gamma, beta, running_mean, running_var, training,
               momentum=0.9, eps=1e-5):
    """Normalize a [batch, channels] tensor per channel.

    In training mode the running statistics (numpy arrays) are updated in
    place as ``running = momentum * running + (1 - momentum) * batch``.
    """
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"batch_norm expects [batch, channels], got {x.shape}")
    n = x.shape[0]
    if training:
        if n < 2:
            raise ValueError("batch_norm in training mode needs a batch of at least 2")
        mu = x.data.mean(axis=0)
        xhat = x.data - mu
        var = np.einsum("ij,ij->j", xhat, xhat) / n
        running_mean *= momentum
        running_mean += (1 - momentum) * mu
        running_var *= momentum
        running_var += (1 - momentum) * var
    else:
        mu, var = running_mean, running_var
        xhat = x.data - mu
    inv = 1.0 / np.sqrt(var + eps)
    xhat *= inv
    gm = gamma.data
    out = xhat * gm
    out += beta.data

    def back(g):
        gsum = g.sum(axis=0)
        gxhat = np.einsum("ij,ij->j", g, xhat)
        if training:
            dx = g - gsum / n
            dx -= xhat * (gxhat / n)
            dx *= gm * inv
        else:
            dx = g * (gm * inv)
        return dx, gxhat, gsum

    return Tensor._op(out, (x, gamma, beta), back)


def cross_entropy_loss(logits, labels):
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    b, k = logits.shape
    if labels.shape != (b,):
        raise ShapeError(f"labels shape {labels.shape} does not match logits {logits.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"label out of range [0, {k})")
    s = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = s - np.log(np.exp(s).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(b), labels].mean()

    def back(g):
        d = np.exp(logp)
        d[np.arange(b), labels] -= 1.0
        return (g * d / b,)

    return Tensor._op(np.asarray(loss), (logits,), back)
