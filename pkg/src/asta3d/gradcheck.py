"""Central finite differences against reverse-mode gradients."""

import numpy as np

from . import tensor


def numerical_grad(fn, array, h=1e-6, entries=None):
    """d fn() / d array by central differences, perturbing ``array`` in place.

    ``entries`` restricts the work to those flat indices (others stay 0).
    """
    grad = np.zeros_like(array)
    flat, gflat = array.reshape(-1), grad.reshape(-1)
    for i in range(flat.size) if entries is None else entries:
        old = flat[i]
        flat[i] = old + h
        up = float(fn())
        flat[i] = old - h
        down = float(fn())
        flat[i] = old
        gflat[i] = (up - down) / (2 * h)
    return grad


def max_relative_error(analytic, numeric):
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic)), initial=0.0))


def check_gradients(loss_fn, tensors, h=1e-6, max_entries=None, rng=None):
    """Worst relative error over the entries of ``tensors``.

    ``loss_fn`` must rebuild the graph from the tensors' current data and
    return a scalar Tensor. With ``max_entries`` only a random sample of
    that many entries per tensor is differenced.
    """
    for t in tensors:
        t.grad = None
    loss_fn().backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    worst = 0.0
    rng = rng or np.random.default_rng(0)
    for t, a in zip(tensors, analytic):
        entries = None
        if max_entries is not None and t.data.size > max_entries:
            entries = rng.choice(t.data.size, max_entries, replace=False)
        num = numerical_grad(lambda: loss_fn().data, t.data, h, entries)
        if entries is not None:
            a, num = a.reshape(-1)[entries], num.reshape(-1)[entries]
        worst = max(worst, max_relative_error(a, num))
    return worst


def relu_margin(fn):
    """Smallest |input| seen by any ReLU while running ``fn``.

    Central differences are meaningless when a step of size h crosses a
    kink, so checks should skip instances whose margin is below ~10 h.
    """
    tensor._relu_inputs = seen = []
    try:
        fn()
    finally:
        tensor._relu_inputs = None
    return min(seen, default=np.inf)
