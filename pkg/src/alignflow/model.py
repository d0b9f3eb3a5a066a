"""Two flows over one shared latent space.

``flow_a`` maps latent ``z`` to domain A and ``flow_b`` maps it to domain B.
Translation composes one flow's inverse with the other's forward, so the
two translation directions are exact inverses of each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, as_tensor, no_tape, unique_parameters
from .autodiff import ops as T
from .flows import FlowSequence, FlowSpec, build_flow

LOG_2PI = math.log(2.0 * math.pi)


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class IsotropicGaussian:
    dim: int

    def log_density(self, z) -> Tensor:
        z = as_tensor(z)
        return -0.5 * T.sum(T.square(z), axis=1) - 0.5 * self.dim * LOG_2PI

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal((n, self.dim))

    def entropy(self) -> float:
        return 0.5 * self.dim * (1.0 + LOG_2PI)


@dataclass(frozen=True)
class SharingSpec:
    """Which latent-side layers the two flows hold in common.

    ``mode`` is ``"none"``, ``"full"`` or ``"prefix"``; with ``"prefix"``
    the first ``n_layers`` layers (counted from the latent side) are the
    same objects in both flows.
    """

    mode: str = "none"
    n_layers: int = 0

    def __post_init__(self):
        if self.mode not in ("none", "full", "prefix"):
            raise ModelError(f"unknown sharing mode {self.mode!r}")
        if self.n_layers < 0:
            raise ModelError("n_layers must be >= 0")

    def to_dict(self):
        return {"mode": self.mode, "n_layers": self.n_layers}


class AlignFlowModel:
    def __init__(self, flow_a: FlowSequence, flow_b: FlowSequence, sharing: SharingSpec | None = None):
        if flow_a.dim != flow_b.dim:
            raise ModelError(f"flows disagree on latent dimension: {flow_a.dim} vs {flow_b.dim}")
        self.flow_a = flow_a
        self.flow_b = flow_b
        self.dim = flow_a.dim
        self.prior = IsotropicGaussian(self.dim)
        self.sharing = sharing or SharingSpec()

    @classmethod
    def build(cls, spec: FlowSpec, sharing: SharingSpec | None = None, seed: int = 0):
        sharing = sharing or SharingSpec()
        seeds = np.random.SeedSequence(seed).generate_state(2)
        flow_a = build_flow(spec, seed=int(seeds[0]))
        if sharing.mode == "full":
            flow_b = flow_a
        else:
            flow_b = build_flow(spec, seed=int(seeds[1]))
            if sharing.mode == "prefix":
                k = min(sharing.n_layers, len(flow_a.layers))
                flow_b = FlowSequence(flow_a.layers[:k] + flow_b.layers[k:])
        return cls(flow_a, flow_b, sharing)

    def flow(self, domain: str) -> FlowSequence:
        if domain == "A":
            return self.flow_a
        if domain == "B":
            return self.flow_b
        raise ModelError(f"domain must be 'A' or 'B', got {domain!r}")

    def parameters(self) -> list[Tensor]:
        """Generator parameters, shared tensors listed once, flow A first."""
        return unique_parameters(self.flow_a.parameters() + self.flow_b.parameters())

    def initialize(self, data_a, data_b):
        self.flow_a.initialize(data_a)
        self.flow_b.initialize(data_b)

    def _check(self, x, where):
        x = as_tensor(x)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ModelError(f"{where}: expected shape (n, {self.dim}), got {x.shape}")
        return x

    # translation

    def translate_a_to_b(self, a) -> Tensor:
        a = self._check(a, "translate_a_to_b")
        z, _ = self.flow_a.inverse(a)
        return self.flow_b.forward(z)[0]

    def translate_b_to_a(self, b) -> Tensor:
        b = self._check(b, "translate_b_to_a")
        z, _ = self.flow_b.inverse(b)
        return self.flow_a.forward(z)[0]

    def translate(self, x, direction: str) -> Tensor:
        if direction == "a2b":
            return self.translate_a_to_b(x)
        if direction == "b2a":
            return self.translate_b_to_a(x)
        raise ModelError(f"direction must be 'a2b' or 'b2a', got {direction!r}")

    # densities

    def encode(self, x, domain: str):
        """Latent code and ``log |det dz/dx|`` per row."""
        x = self._check(x, "encode")
        return self.flow(domain).inverse(x)

    def decode(self, z, domain: str) -> Tensor:
        z = self._check(z, "decode")
        return self.flow(domain).forward(z)[0]

    def log_prob(self, x, domain: str) -> Tensor:
        """Per-row log-likelihood under the chosen domain's flow."""
        z, ld = self.encode(x, domain)
        return self.prior.log_density(z) + ld

    # sampling

    def sample_paired(self, n: int, seed: int = 0):
        if n < 1:
            raise ModelError("n must be >= 1")
        z = self.prior.sample(n, np.random.default_rng(seed))
        with no_tape():
            a = self.flow_a.forward(z)[0].data
            b = self.flow_b.forward(z)[0].data
        return a, b

    def interpolate(self, a1, a2, steps: int, phi_range=(0.0, math.pi / 2)):
        """Polar interpolation ``z1 sin(phi) + z2 cos(phi)`` between two A points.

        Returns ``(phis, a_t, b_t)``; ``phis`` runs evenly over ``phi_range``
        endpoints included.
        """
        if steps < 2:
            raise ModelError("steps must be >= 2")
        a1 = np.atleast_2d(np.asarray(a1, dtype=float))
        a2 = np.atleast_2d(np.asarray(a2, dtype=float))
        phis = np.linspace(phi_range[0], phi_range[1], steps)
        with no_tape():
            z1 = self.encode(a1, "A")[0].data
            z2 = self.encode(a2, "A")[0].data
            zt = z1 * np.sin(phis)[:, None] + z2 * np.cos(phis)[:, None]
            a_t = self.flow_a.forward(zt)[0].data
            b_t = self.flow_b.forward(zt)[0].data
        return phis, a_t, b_t

    # cycle consistency

    def cycle_loss(self, batch_a) -> float:
        """Mean L1 error of a -> b -> a."""
        a = self._check(batch_a, "cycle_loss")
        if a.shape[0] == 0:
            raise ModelError("cycle_loss: empty batch")
        with no_tape():
            back = self.translate_b_to_a(self.translate_a_to_b(a))
        return float(np.mean(np.sum(np.abs(back.data - a.data), axis=1)))

    def cycle_loss_reverse(self, batch_b) -> float:
        """Mean L1 error of b -> a -> b."""
        b = self._check(batch_b, "cycle_loss_reverse")
        if b.shape[0] == 0:
            raise ModelError("cycle_loss_reverse: empty batch")
        with no_tape():
            back = self.translate_a_to_b(self.translate_b_to_a(b))
        return float(np.mean(np.sum(np.abs(back.data - b.data), axis=1)))

    def permuted(self, perm) -> "AlignFlowModel":
        """Copy whose flow A reads its latent through a coordinate permutation.

        ``flow_a'(z) = flow_a(z[:, perm])``; flow B is kept. With a symmetric
        prior both per-domain likelihoods are unchanged while the A<->B
        translation generally is not.
        """
        from .flows import Shuffle

        shuffle = Shuffle(perm)
        flow_a = FlowSequence([shuffle] + list(self.flow_a.layers))
        sharing = SharingSpec("none") if self.sharing.mode != "none" else self.sharing
        return AlignFlowModel(flow_a, self.flow_b, sharing)
