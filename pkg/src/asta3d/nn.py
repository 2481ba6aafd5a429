"""Parameters and small building blocks shared by every network."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, batch_norm, linear, relu


class Parameter(Tensor):
    def __init__(self, data, name=""):
        super().__init__(data, requires_grad=True, name=name)


class Module:
    """Tree of named parameters and buffers (BatchNorm running statistics)."""

    training = True

    def children(self):
        for key, value in vars(self).items():
            if isinstance(value, Module):
                yield key, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{key}.{i}", item

    def named_parameters(self, prefix=""):
        for key, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + key, value
        for key, child in self.children():
            yield from child.named_parameters(f"{prefix}{key}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for key in getattr(self, "_buffers", ()):
            yield prefix + key, getattr(self, key)
        for key, child in self.children():
            yield from child.named_buffers(f"{prefix}{key}.")

    def state(self):
        """name -> ndarray for every parameter and buffer (live references)."""
        out = {name: p.data for name, p in self.named_parameters()}
        out.update(dict(self.named_buffers()))
        return out

    def load_state(self, arrays):
        own = self.state()
        missing = set(own) - set(arrays)
        extra = set(arrays) - set(own)
        if missing or extra:
            raise KeyError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, target in own.items():
            src = np.asarray(arrays[name], dtype=np.float64)
            if src.shape != target.shape:
                raise ValueError(f"{name}: shape {src.shape} != {target.shape}")
            target[...] = src

    def train(self, mode=True):
        self.training = mode
        for _, child in self.children():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def parameter_count(self):
        return int(sum(p.data.size for p in self.parameters()))


class Linear(Module):
    def __init__(self, n_in, n_out, rng, bias=True):
        # He initialisation; every linear map in these networks feeds a ReLU.
        self.weight = Parameter(rng.normal(0.0, np.sqrt(2.0 / n_in), (n_in, n_out)))
        self.bias = Parameter(np.zeros(n_out)) if bias else None

    def __call__(self, x):
        return linear(x, self.weight, self.bias)


class BatchNorm(Module):
    _buffers = ("running_mean", "running_var")

    def __init__(self, channels, momentum=0.9, eps=1e-5):
        self.gamma = Parameter(np.ones(channels))
        self.beta = Parameter(np.zeros(channels))
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps

    def __call__(self, x):
        return batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                          self.training, self.momentum, self.eps)


class SharedMLP(Module):
    """Per-row MLP: Linear -> BatchNorm -> ReLU for each layer.

    ``final_activation=False`` leaves the last layer as a bare linear map,
    which is what attention logits need.
    """

    def __init__(self, widths, rng, batch_norm=True, final_activation=True):
        self.widths = list(widths)
        n_act = len(widths) - 1 - (0 if final_activation else 1)
        # a bias in front of BatchNorm is cancelled by the mean subtraction
        self.linears = [Linear(a, b, rng, bias=not (batch_norm and i < n_act))
                        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:]))]
        self.final_activation = final_activation
        self.norms = [BatchNorm(w) for w in widths[1:1 + n_act]] if batch_norm else []
        self.n_act = n_act

    def __call__(self, x):
        for i, lin in enumerate(self.linears):
            x = lin(x)
            if i < self.n_act:
                if self.norms:
                    x = self.norms[i](x)
                x = relu(x)
        return x
