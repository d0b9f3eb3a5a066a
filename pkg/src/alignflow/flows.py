"""Invertible layers with tractable log-determinants.

Every layer maps latent ``z`` to data ``x`` in :meth:`forward` and back in
:meth:`inverse`. Both return ``(output, log_det)`` where ``log_det`` is a
per-row vector holding ``log |det d(output)/d(input)|``, so the inverse's
value is the negation of the forward one.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import MLP, Tensor, as_tensor, no_tape, unique_parameters
from .autodiff import ops as T


class FlowError(ValueError):
    pass


def _check_dim(x: Tensor, dim: int, where: str):
    if x.ndim != 2 or x.shape[1] != dim:
        raise FlowError(f"{where}: expected input of shape (n, {dim}), got {x.shape}")


class AffineCoupling:
    """Real-NVP style affine coupling on a binary mask.

    Coordinates with ``mask == 1`` pass through and condition a network
    that emits a log-scale and shift for the remaining coordinates. The
    log-scale is squashed to ``[-scale_bound, scale_bound]``.
    """

    def __init__(self, mask, hidden: int, rng: np.random.Generator, n_hidden: int = 2,
                 scale_bound: float = 2.0, activation: str = "tanh"):
        mask = np.asarray(mask, dtype=np.float64)
        if mask.ndim != 1 or not np.all((mask == 0) | (mask == 1)):
            raise FlowError("mask must be a binary vector")
        if mask.min() == mask.max():
            raise FlowError("mask needs at least one pass-through and one transformed coordinate")
        if scale_bound <= 0:
            raise FlowError("scale_bound must be positive")
        self.mask = mask
        self.dim = mask.size
        self.scale_bound = float(scale_bound)
        self._free = 1.0 - mask
        d = self.dim
        # one network emits [log-scale | shift]
        self.net = MLP([d] + [hidden] * n_hidden + [2 * d], rng, activation=activation,
                       zero_last=True)

    def _scale_shift(self, cond: Tensor):
        h = self.net(cond * self.mask)
        d = self.dim
        s = T.tanh(h[:, :d]) * (self.scale_bound * self._free)
        t = h[:, d:] * self._free
        return s, t

    def forward(self, z):
        z = as_tensor(z)
        _check_dim(z, self.dim, "AffineCoupling.forward")
        s, t = self._scale_shift(z)
        return z * T.exp(s) + t, T.sum(s, axis=1)

    def inverse(self, x):
        x = as_tensor(x)
        _check_dim(x, self.dim, "AffineCoupling.inverse")
        s, t = self._scale_shift(x)
        return (x - t) * T.exp(-s), -T.sum(s, axis=1)

    def parameters(self):
        return self.net.parameters()

    def transformed(self) -> set:
        return set(np.flatnonzero(self.mask == 0).tolist())


class ActNorm:
    """Per-coordinate affine map ``x = z * exp(log_scale) + bias``.

    Starts as the identity. :meth:`initialize` sets the parameters from a
    data batch so that the latent-side output of that batch is
    standardized; after that the layer is frozen to ordinary training.
    """

    def __init__(self, dim: int):
        self.dim = dim
        self.log_scale = Tensor(np.zeros(dim), requires_grad=True)
        self.bias = Tensor(np.zeros(dim), requires_grad=True)
        self.initialized = False

    def initialize(self, x, eps: float = 1e-12):
        x = np.asarray(as_tensor(x).data)
        _check_dim(Tensor(x), self.dim, "ActNorm.initialize")
        std = x.std(axis=0)
        self.bias.data = x.mean(axis=0)
        self.log_scale.data = np.log(np.maximum(std, eps))
        self.initialized = True

    def forward(self, z):
        z = as_tensor(z)
        _check_dim(z, self.dim, "ActNorm.forward")
        ld = T.sum(self.log_scale) * np.ones(z.shape[0])
        return z * T.exp(self.log_scale) + self.bias, ld

    def inverse(self, x):
        x = as_tensor(x)
        _check_dim(x, self.dim, "ActNorm.inverse")
        ld = -T.sum(self.log_scale) * np.ones(x.shape[0])
        return (x - self.bias) * T.exp(-self.log_scale), ld

    def parameters(self):
        return [self.log_scale, self.bias]


class Shuffle:
    """Fixed coordinate permutation ``x = z[:, perm]``; volume preserving."""

    def __init__(self, perm):
        perm = np.asarray(perm, dtype=np.intp)
        if perm.ndim != 1 or not np.array_equal(np.sort(perm), np.arange(perm.size)):
            raise FlowError(f"not a permutation: {perm.tolist()}")
        self.perm = perm
        self.inverse_perm = np.argsort(perm)
        self.dim = perm.size

    def forward(self, z):
        z = as_tensor(z)
        _check_dim(z, self.dim, "Shuffle.forward")
        return z[:, self.perm], Tensor(np.zeros(z.shape[0]))

    def inverse(self, x):
        x = as_tensor(x)
        _check_dim(x, self.dim, "Shuffle.inverse")
        return x[:, self.inverse_perm], Tensor(np.zeros(x.shape[0]))

    def parameters(self):
        return []


class FlowSequence:
    """Composition of layers; ``layers[0]`` is applied first to latent ``z``."""

    def __init__(self, layers):
        layers = list(layers)
        if not layers:
            raise FlowError("FlowSequence needs at least one layer")
        dims = {layer.dim for layer in layers}
        if len(dims) != 1:
            raise FlowError(f"layers disagree on dimension: {sorted(dims)}")
        self.layers = layers
        self.dim = dims.pop()

    def forward(self, z):
        x = as_tensor(z)
        _check_dim(x, self.dim, "FlowSequence.forward")
        total = None
        for layer in self.layers:
            x, ld = layer.forward(x)
            total = ld if total is None else total + ld
        return x, total

    def inverse(self, x):
        z = as_tensor(x)
        _check_dim(z, self.dim, "FlowSequence.inverse")
        total = None
        for layer in reversed(self.layers):
            z, ld = layer.inverse(z)
            total = ld if total is None else total + ld
        return z, total

    def initialize(self, x):
        """Data-dependent init of every not-yet-initialized ActNorm.

        Walks from the data side towards the latent side so each ActNorm
        sees the activations that actually reach it.
        """
        h = as_tensor(x)
        with no_tape():
            for layer in reversed(self.layers):
                if isinstance(layer, ActNorm) and not layer.initialized:
                    layer.initialize(h)
                h, _ = layer.inverse(h)

    def parameters(self):
        return unique_parameters(p for layer in self.layers for p in layer.parameters())

    def transformed_coordinates(self) -> set:
        """Coordinates (in each coupling's own frame) that some coupling rescales.

        Shuffles are tracked so the result is expressed in data coordinates.
        """
        # position i at this point in the z->x chain holds original data coordinate track[i]
        covered = set()
        track = np.arange(self.dim)
        for layer in reversed(self.layers):
            if isinstance(layer, AffineCoupling):
                covered |= {int(track[i]) for i in layer.transformed()}
            elif isinstance(layer, Shuffle):
                # inverse maps data-side position j to latent-side position inverse_perm[j]
                new = np.empty_like(track)
                new[layer.perm] = track
                track = new
        return covered


@dataclass(frozen=True)
class FlowSpec:
    """Architecture description for :func:`build_flow`."""

    dim: int
    depth: int = 6
    hidden: int = 32
    n_hidden: int = 3
    scale_bound: float = 2.0
    activation: str = "tanh"
    actnorm: bool = True
    shuffle_every: int = 2

    def to_dict(self) -> dict:
        return asdict(self)


def build_flow(spec: FlowSpec, seed: int = 0) -> FlowSequence:
    """Alternating-mask couplings, each preceded (data side) by an ActNorm.

    For ``dim > 2`` a random Shuffle is inserted after every
    ``shuffle_every`` couplings. In two dimensions the alternating masks
    already cover both coordinates and a swap would undo the alternation.
    Coupling output layers are zero so the flow starts as the identity.
    """
    if spec.dim < 2:
        raise FlowError("flows need dim >= 2 so a coupling has something to split")
    if spec.depth < 1:
        raise FlowError("depth must be >= 1")
    rng = np.random.default_rng(seed)
    even = (np.arange(spec.dim) % 2 == 0).astype(float)
    data_side = []  # built from the data side inward, reversed at the end
    for i in range(spec.depth):
        if spec.actnorm:
            data_side.append(ActNorm(spec.dim))
        mask = even if i % 2 == 0 else 1.0 - even
        data_side.append(AffineCoupling(mask, spec.hidden, rng, spec.n_hidden, spec.scale_bound,
                                        spec.activation))
        last = i == spec.depth - 1
        if spec.dim > 2 and spec.shuffle_every and (i + 1) % spec.shuffle_every == 0 and not last:
            data_side.append(Shuffle(rng.permutation(spec.dim)))
    return FlowSequence(reversed(data_side))


def perturb_parameters(params, rng: np.random.Generator, scale: float = 0.2):
    """Add N(0, scale^2) noise to every parameter in place (test fixtures)."""
    for p in params:
        p.data = p.data + scale * rng.standard_normal(p.data.shape)
