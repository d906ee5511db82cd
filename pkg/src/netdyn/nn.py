"""Small feed-forward building blocks on top of the tensor substrate."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor


def xavier(rng, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Linear:
    def __init__(self, d_in, d_out, rng, bias=True):
        self.w = Tensor(xavier(rng, d_in, d_out), requires_grad=True)
        self.b = Tensor(np.zeros((1, d_out)), requires_grad=True) if bias else None

    def __call__(self, x):
        y = T.matmul(x, self.w)
        if self.b is not None:
            y = T.add(y, T.tile_rows(self.b, y.data.shape[0]))
        return y

    def parameters(self):
        return [self.w] if self.b is None else [self.w, self.b]


class MLP:
    """Fully connected net with tanh hidden activations and linear output."""

    def __init__(self, widths, rng):
        self.layers = [Linear(a, b, rng) for a, b in zip(widths[:-1], widths[1:])]

    def __call__(self, x):
        h = x
        for layer in self.layers[:-1]:
            h = T.tanh(layer(h))
        return self.layers[-1](h)

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def named_parameters(self, prefix):
        out = {}
        for i, layer in enumerate(self.layers):
            out[f"{prefix}.w{i}"] = layer.w
            if layer.b is not None:
                out[f"{prefix}.b{i}"] = layer.b
        return out

    def zero_(self):
        for p in self.parameters():
            p.data[:] = 0.0
