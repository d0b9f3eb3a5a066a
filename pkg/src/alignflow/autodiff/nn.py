"""Minimal layers built on the tape: affine maps and multilayer perceptrons."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor

ACTIVATIONS = {
    "tanh": T.tanh,
    "leaky_relu": lambda x: T.leaky_relu(x, 0.2),
    "sigmoid": T.sigmoid,
}


class Linear:
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, zero: bool = False):
        if zero:
            w = np.zeros((n_in, n_out))
        else:
            # Glorot uniform
            limit = np.sqrt(6.0 / (n_in + n_out))
            w = rng.uniform(-limit, limit, size=(n_in, n_out))
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(n_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]


class MLP:
    """Stack of :class:`Linear` layers with a fixed hidden activation.

    ``zero_last`` zero-initializes the output layer so the network starts
    out emitting exactly zero.
    """

    def __init__(self, sizes, rng, activation="tanh", zero_last=False, out_activation=None):
        if len(sizes) < 2:
            raise ValueError("MLP needs at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        self.activation = activation
        self.out_activation = out_activation
        n = len(sizes) - 1
        self.layers = [
            Linear(sizes[i], sizes[i + 1], rng, zero=zero_last and i == n - 1) for i in range(n)
        ]

    def __call__(self, x: Tensor) -> Tensor:
        act = ACTIVATIONS[self.activation]
        h = x
        for layer in self.layers[:-1]:
            h = act(layer(h))
        h = self.layers[-1](h)
        if self.out_activation is not None:
            h = ACTIVATIONS[self.out_activation](h)
        return h

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]


def unique_parameters(params) -> list[Tensor]:
    """Drop repeated tensors while keeping first-seen order."""
    seen = set()
    out = []
    for p in params:
        if id(p) not in seen:
            seen.add(id(p))
            out.append(p)
    return out
