"""Paired-test metrics, histogram marginal checks and the permutation demo."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import no_tape
from .domains import DomainPairSpec, PairedSet, sample_domain


class EvaluationError(ValueError):
    pass


def _unit_box(reference: np.ndarray):
    lo = reference.min(axis=0)
    hi = reference.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return lambda x: 2.0 * (x - lo) / span - 1.0


def normalized_mse(pred: np.ndarray, target: np.ndarray) -> float:
    """MSE after mapping each coordinate of ``target`` onto [-1, 1].

    The affine map comes from ``target``'s own per-coordinate min and max
    and is applied identically to ``pred``.
    """
    if len(target) == 0:
        raise EvaluationError("normalized_mse: empty set")
    norm = _unit_box(target)
    return float(np.mean((norm(pred) - norm(target)) ** 2))


def translation_mse(model, pairs: PairedSet) -> tuple[float, float]:
    if len(pairs) == 0:
        raise EvaluationError("translation_mse: empty paired set")
    with no_tape():
        b_hat = model.translate_a_to_b(pairs.a).data
        a_hat = model.translate_b_to_a(pairs.b).data
    return normalized_mse(b_hat, pairs.b), normalized_mse(a_hat, pairs.a)


@dataclass(frozen=True)
class EvalReport:
    mse_a_to_b: float
    mse_b_to_a: float
    nll_a: float
    nll_b: float
    cycle_error: float

    def to_dict(self):
        return asdict(self)


def evaluate(model, pairs: PairedSet) -> EvalReport:
    mse_ab, mse_ba = translation_mse(model, pairs)
    with no_tape():
        nll_a = -float(np.mean(model.log_prob(pairs.a, "A").data))
        nll_b = -float(np.mean(model.log_prob(pairs.b, "B").data))
    cyc = max(model.cycle_loss(pairs.a), model.cycle_loss_reverse(pairs.b))
    return EvalReport(mse_ab, mse_ba, nll_a, nll_b, cyc)


# histogram KL


def histogram_range(*samples, lo_q=1e-4, hi_q=1 - 1e-4, margin=0.1):
    """Per-coordinate bin range from pooled quantiles, widened by ``margin``."""
    pooled = np.vstack(samples)
    lo = np.quantile(pooled, lo_q, axis=0)
    hi = np.quantile(pooled, hi_q, axis=0)
    pad = margin * (hi - lo)
    return np.stack([lo - pad, hi + pad], axis=1)


def _histogram(x, bins, ranges):
    if x.shape[1] == 1:
        h, _ = np.histogram(x[:, 0], bins=bins, range=tuple(ranges[0]))
    else:
        h, _, _ = np.histogram2d(x[:, 0], x[:, 1], bins=bins, range=[tuple(r) for r in ranges])
    return h.astype(np.float64)


def histogram_kl(p_samples, q_samples, bins=64, ranges=None, smoothing=1e-6,
                 max_outside=1e-3) -> float:
    """KL(p || q) between binned samples in one or two dimensions.

    Each bin's probability gets ``smoothing`` added before renormalizing.
    Raises when more than ``max_outside`` of either sample falls outside
    the bin range.
    """
    p_samples = np.asarray(p_samples, dtype=float)
    q_samples = np.asarray(q_samples, dtype=float)
    d = p_samples.shape[1]
    if d > 2 or q_samples.shape[1] != d:
        raise EvaluationError(f"histogram KL supports d <= 2 (got {d})")
    if ranges is None:
        ranges = histogram_range(p_samples, q_samples)
    ranges = np.asarray(ranges, dtype=float)
    hp = _histogram(p_samples, bins, ranges)
    hq = _histogram(q_samples, bins, ranges)
    for name, h, n in (("p", hp, len(p_samples)), ("q", hq, len(q_samples))):
        outside = 1.0 - h.sum() / n
        if outside > max_outside:
            raise EvaluationError(
                f"{outside:.3%} of {name} samples fall outside the histogram range")
    p = hp / hp.sum() + smoothing
    q = hq / hq.sum() + smoothing
    p /= p.sum()
    q /= q.sum()
    return float(np.sum(p * np.log(p / q)))


def marginal_consistency_check(model, spec: DomainPairSpec, bins=64, n=100_000, seed=0) -> dict:
    """Histogram KL(true || model) for both domains from ``n`` samples each."""
    if model.dim > 2:
        raise EvaluationError(f"marginal check is limited to d <= 2 (model has d={model.dim})")
    ss = np.random.SeedSequence([seed, 0xA1])
    s_true_a, s_true_b, s_model = (int(s.generate_state(1)[0]) for s in ss.spawn(3))
    model_a, model_b = model.sample_paired(n, seed=s_model)
    true_a = sample_domain(spec, "A", n, s_true_a)
    true_b = sample_domain(spec, "B", n, s_true_b)
    return {
        "kl_a": histogram_kl(true_a, model_a, bins),
        "kl_b": histogram_kl(true_b, model_b, bins),
    }


# non-identifiability


def permutation_nonidentifiability_demo(model, perm, pairs: PairedSet) -> dict:
    """Compare a model with its latent-permuted twin on likelihood and translation.

    Both per-domain NLLs match (symmetric prior, volume-preserving
    permutation) while the A->B translation MSE generally moves.
    """
    perm = np.asarray(perm)
    if perm.ndim != 1 or not np.array_equal(np.sort(perm), np.arange(model.dim)):
        raise EvaluationError(f"not a permutation of {model.dim} coordinates: {perm.tolist()}")
    twin = model.permuted(perm)
    with no_tape():
        nll = {
            (name, dom): -float(np.mean(m.log_prob(x, dom).data))
            for name, m in (("orig", model), ("perm", twin))
            for dom, x in (("A", pairs.a), ("B", pairs.b))
        }
    mse_orig = translation_mse(model, pairs)
    mse_perm = translation_mse(twin, pairs)
    return {
        "nll_a": nll["orig", "A"],
        "nll_a_perm": nll["perm", "A"],
        "nll_b": nll["orig", "B"],
        "nll_b_perm": nll["perm", "B"],
        "nll_diff": max(abs(nll["orig", "A"] - nll["perm", "A"]),
                        abs(nll["orig", "B"] - nll["perm", "B"])),
        "mse_a_to_b": mse_orig[0],
        "mse_a_to_b_perm": mse_perm[0],
        "mse_b_to_a": mse_orig[1],
        "mse_b_to_a_perm": mse_perm[1],
        "mse_diff": abs(mse_orig[0] - mse_perm[0]),
    }
