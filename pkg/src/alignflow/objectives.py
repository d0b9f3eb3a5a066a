"""Critics, the cross-entropy GAN loss, likelihood terms and the hybrid objective.

Sign conventions: ``gan_loss`` is the critic's value (it is maximized by
the critic and minimized by the generator). The hybrid objective adds
``lambda * NLL`` per domain, so the generator minimizes it as a whole.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import MLP, Tensor, as_tensor
from .autodiff import ops as T

PROB_CLAMP = 1e-7


class ObjectiveError(ValueError):
    pass


class Critic:
    """MLP classifier with a sigmoid head giving P(real)."""

    def __init__(self, dim: int, domain: str, rng=None, hidden: int = 64, n_hidden: int = 3):
        if domain not in ("A", "B"):
            raise ObjectiveError(f"critic domain must be 'A' or 'B', got {domain!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.dim = dim
        self.domain = domain
        self.net = MLP([dim] + [hidden] * n_hidden + [1], rng, activation="leaky_relu",
                       out_activation="sigmoid")

    def __call__(self, x) -> Tensor:
        return self.net(as_tensor(x))[:, 0]

    def parameters(self):
        return self.net.parameters()


class ConstantCritic:
    """Outputs the same probability everywhere; handy for checks."""

    def __init__(self, value: float = 0.5, domain: str = "A"):
        self.value = float(value)
        self.domain = domain

    def __call__(self, x) -> Tensor:
        x = as_tensor(x)
        return Tensor(np.full(x.shape[0], self.value))

    def parameters(self):
        return []


class FunctionCritic:
    """Wraps a numpy function ``x -> probabilities`` as a (non-trainable) critic."""

    def __init__(self, fn, domain: str = "A"):
        self.fn = fn
        self.domain = domain

    def __call__(self, x) -> Tensor:
        x = as_tensor(x)
        return Tensor(self.fn(x.data))

    def parameters(self):
        return []


def _nonempty(batch, name):
    batch = as_tensor(batch)
    if batch.ndim != 2 or batch.shape[0] == 0:
        raise ObjectiveError(f"{name}: batch must be non-empty (n, d), got shape {batch.shape}")
    return batch


def _log_prob(p: Tensor) -> Tensor:
    return T.log(T.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP))


def _log_one_minus(p: Tensor) -> Tensor:
    return T.log(T.clip(1.0 - p, PROB_CLAMP, 1.0 - PROB_CLAMP))


def gan_loss(critic, real, fake) -> Tensor:
    """``mean log C(real) + mean log(1 - C(fake))`` with probabilities clamped."""
    real = _nonempty(real, "gan_loss(real)")
    fake = _nonempty(fake, "gan_loss(fake)")
    if real.shape[1] != fake.shape[1]:
        raise ObjectiveError(f"gan_loss: real dim {real.shape[1]} != fake dim {fake.shape[1]}")
    return T.mean(_log_prob(critic(real))) + T.mean(_log_one_minus(critic(fake)))


def generator_adversarial_term(critic, fake, non_saturating: bool = False) -> Tensor:
    """The part of the GAN loss the generator can move.

    Saturating form ``mean log(1 - C(fake))`` by default; the
    non-saturating alternative ``-mean log C(fake)`` on request.
    """
    fake = _nonempty(fake, "generator_adversarial_term")
    if non_saturating:
        return -T.mean(_log_prob(critic(fake)))
    return T.mean(_log_one_minus(critic(fake)))


def cross_domain_gan_losses(model, critic_a, critic_b, batch_a, batch_b):
    """GAN values for A (fakes are translated B points) and for B."""
    batch_a = _nonempty(batch_a, "cross_domain_gan_losses(A)")
    batch_b = _nonempty(batch_b, "cross_domain_gan_losses(B)")
    fake_a = model.translate_b_to_a(batch_b)
    fake_b = model.translate_a_to_b(batch_a)
    return gan_loss(critic_a, batch_a, fake_a), gan_loss(critic_b, batch_b, fake_b)


def mle_loss(model, batch, domain: str) -> Tensor:
    """Mean negative log-likelihood of ``batch`` under the domain's flow."""
    batch = _nonempty(batch, "mle_loss")
    return -T.mean(model.log_prob(batch, domain))


@dataclass(frozen=True)
class HybridObjectiveConfig:
    """Weights of the likelihood terms.

    ``mle_only`` stands for infinite weights: the adversarial terms are
    dropped and the NLLs enter with weights ``lambda_a``/``lambda_b``.
    """

    lambda_a: float = 1e-5
    lambda_b: float = 1e-5
    mle_only: bool = False
    non_saturating: bool = False
    use_gan_a: bool = True
    use_gan_b: bool = True

    def __post_init__(self):
        for name in ("lambda_a", "lambda_b"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v)):
                raise ObjectiveError(f"{name} must be a finite number, got {v!r}")
            if v < 0:
                raise ObjectiveError(f"{name} must be >= 0, got {v}")

    @classmethod
    def adversarial(cls, **kw):
        return cls(lambda_a=0.0, lambda_b=0.0, **kw)

    @classmethod
    def mle(cls, **kw):
        kw.setdefault("lambda_a", 1.0)
        kw.setdefault("lambda_b", 1.0)
        return cls(mle_only=True, **kw)

    @property
    def adversarial_only(self) -> bool:
        return not self.mle_only and self.lambda_a == 0 and self.lambda_b == 0

    @property
    def uses_gan(self) -> bool:
        return not self.mle_only and (self.use_gan_a or self.use_gan_b)

    @property
    def uses_mle(self) -> bool:
        return self.mle_only or self.lambda_a > 0 or self.lambda_b > 0

    @property
    def mode(self) -> str:
        if self.mle_only:
            return "mle"
        return "adversarial" if self.adversarial_only else "hybrid"

    def to_dict(self):
        return {
            "lambda_a": self.lambda_a,
            "lambda_b": self.lambda_b,
            "mle_only": self.mle_only,
            "non_saturating": self.non_saturating,
            "use_gan_a": self.use_gan_a,
            "use_gan_b": self.use_gan_b,
        }


@dataclass
class ObjectiveTerms:
    total: Tensor
    gan_a: Tensor | None
    gan_b: Tensor | None
    nll_a: Tensor
    nll_b: Tensor

    def values(self) -> dict:
        f = lambda t: float("nan") if t is None else float(t.data)
        return {"gan_a": f(self.gan_a), "gan_b": f(self.gan_b), "nll_a": f(self.nll_a),
                "nll_b": f(self.nll_b), "total": f(self.total)}


def alignflow_objective(model, critic_a, critic_b, batch_a, batch_b,
                        cfg: HybridObjectiveConfig) -> ObjectiveTerms:
    """GAN_A + GAN_B + lambda_A * NLL_A + lambda_B * NLL_B.

    Each latent code is computed once and reused by both the likelihood
    and the translation that starts from it. Disabled terms contribute
    nothing (and are reported as ``None`` for the GAN parts).
    """
    batch_a = _nonempty(batch_a, "alignflow_objective(A)")
    batch_b = _nonempty(batch_b, "alignflow_objective(B)")
    za, lda = model.flow_a.inverse(batch_a)
    zb, ldb = model.flow_b.inverse(batch_b)
    nll_a = -T.mean(model.prior.log_density(za) + lda)
    nll_b = -T.mean(model.prior.log_density(zb) + ldb)

    gan_a = gan_b = None
    if cfg.mle_only:
        total = cfg.lambda_a * nll_a + cfg.lambda_b * nll_b
    else:
        total = Tensor(0.0)
        if cfg.use_gan_a:
            fake_a = model.flow_a.forward(zb)[0]
            gan_a = gan_loss(critic_a, batch_a, fake_a)
            total = total + gan_a
        if cfg.use_gan_b:
            fake_b = model.flow_b.forward(za)[0]
            gan_b = gan_loss(critic_b, batch_b, fake_b)
            total = total + gan_b
        if cfg.lambda_a:
            total = total + cfg.lambda_a * nll_a
        if cfg.lambda_b:
            total = total + cfg.lambda_b * nll_b
    return ObjectiveTerms(total, gan_a, gan_b, nll_a, nll_b)


# analytic critic oracles


def bayes_critic(p_real, p_model):
    """Optimal cross-entropy critic ``p_real / (p_real + p_model)``."""
    p_real = np.asarray(p_real, dtype=float)
    p_model = np.asarray(p_model, dtype=float)
    denom = p_real + p_model
    if np.any(denom <= 0):
        raise ObjectiveError("bayes_critic: both densities are zero")
    out = p_real / denom
    return float(out) if out.ndim == 0 else out


def optimal_critic_transfer(c_b_star, p_a_star, p_b_star, log_det_b_to_a):
    """A's optimal critic from B's, as the closed form is usually written.

    ``C_A = C_B p_A / (p_A + p_B (1 - C_B) |det J|)`` with
    ``|det J| = exp(log_det_b_to_a)``. See :func:`critic_from_partner` for
    the form that follows from the Bayes critic identities.
    """
    c = np.asarray(c_b_star, dtype=float)
    pa = np.asarray(p_a_star, dtype=float)
    pb = np.asarray(p_b_star, dtype=float)
    denom = pa + pb * (1.0 - c) * np.exp(np.asarray(log_det_b_to_a, dtype=float))
    if np.any(denom == 0):
        raise ObjectiveError("optimal_critic_transfer: zero denominator")
    out = c * pa / denom
    return float(out) if out.ndim == 0 else out


def critic_from_partner(c_b_star, p_a_star, p_b_star, log_det_a_to_b):
    """A's Bayes critic from B's when model densities are related through the latent.

    If ``p_A(a) = p_B(b) |det dG_AB/da|`` and both critics are Bayes
    optimal then ``C_A = C_B p*_A / (C_B p*_A + p*_B (1 - C_B) |det dG_AB/da|)``.
    """
    c = np.asarray(c_b_star, dtype=float)
    pa = np.asarray(p_a_star, dtype=float)
    pb = np.asarray(p_b_star, dtype=float)
    num = c * pa
    denom = num + pb * (1.0 - c) * np.exp(np.asarray(log_det_a_to_b, dtype=float))
    if np.any(denom == 0):
        raise ObjectiveError("critic_from_partner: zero denominator")
    out = num / denom
    return float(out) if out.ndim == 0 else out
