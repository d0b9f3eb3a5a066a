"""Numeric invariant suites: round-trip, log-det, critic identity, permutation, marginals.

Each suite returns a list of :class:`Check` results. :func:`run_suites`
runs several suites in a thread pool whose size is capped by the
``ALIGNFLOW_THREADS`` environment variable.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .autodiff import no_tape
from .domains import DomainPairSpec, PairedSet
from .evaluation import histogram_kl, marginal_consistency_check, permutation_nonidentifiability_demo
from .flows import FlowSpec, perturb_parameters
from .model import AlignFlowModel
from .objectives import bayes_critic, critic_from_partner, optimal_critic_transfer

SUITES = ("roundtrip", "logdet", "critic", "perm", "marginal")


class VerifyError(ValueError):
    pass


@dataclass
class Check:
    suite: str
    name: str
    value: float
    tol: float
    passed: bool
    note: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.note})" if self.note else ""
        return f"{status} {self.suite}/{self.name}: value={self.value:.3e} tol={self.tol:.1e}{extra}"


def _check(suite, name, value, tol, note=""):
    value = float(value)
    return Check(suite, name, value, tol, bool(math.isfinite(value) and value < tol), note)


def fresh_model(dim=2, depth=6, hidden=16, seed=0, scale=0.2, sharing=None) -> AlignFlowModel:
    """A model with randomized (non-identity) parameters for invariant checks."""
    model = AlignFlowModel.build(FlowSpec(dim=dim, depth=depth, hidden=hidden), sharing, seed=seed)
    perturb_parameters(model.parameters(), np.random.default_rng(seed), scale)
    return model


def numeric_jacobian(fn, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian of a map R^d -> R^d at a single point."""
    x = np.asarray(x, dtype=float)
    d = x.size
    jac = np.empty((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        jac[:, j] = (fn(x + e) - fn(x - e)) / (2 * h)
    return jac


def logdet_errors(flow, points: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Relative error between analytic and finite-difference |det| per point."""

    def fwd(z):
        return flow.forward(z[None, :])[0].data[0]

    errs = []
    with no_tape():
        for z in points:
            analytic = float(flow.forward(z[None, :])[1].data[0])
            _, numeric = np.linalg.slogdet(numeric_jacobian(fwd, z, h))
            errs.append(abs(math.expm1(numeric - analytic)))
    return np.array(errs)


# suites


def suite_roundtrip(model, n=1000, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, model.dim))
    checks = [
        _check("roundtrip", "cycle_loss", model.cycle_loss(x), 1e-9),
        _check("roundtrip", "cycle_loss_reverse", model.cycle_loss_reverse(x), 1e-9),
    ]
    with no_tape():
        for dom in ("A", "B"):
            flow = model.flow(dom)
            z, ld_inv = flow.inverse(x)
            back, ld_fwd = flow.forward(z)
            checks.append(_check("roundtrip", f"flow_{dom}_inverse",
                                 np.max(np.abs(back.data - x)), 1e-9))
            checks.append(_check("roundtrip", f"flow_{dom}_logdet_sum",
                                 np.max(np.abs(ld_inv.data + ld_fwd.data)), 1e-10))
    return checks


def suite_logdet(model, n=50, seed=0):
    if model.dim > 6:
        return [Check("logdet", "skipped", 0.0, 1e-4, True, f"d={model.dim} > 6")]
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((n, model.dim))
    return [
        _check("logdet", f"flow_{dom}", logdet_errors(model.flow(dom), pts).max(), 1e-4)
        for dom in ("A", "B")
    ]


def _normal_pdf(x, std=1.0):
    return np.exp(-0.5 * (x / std) ** 2) / (std * math.sqrt(2 * math.pi))


def critic_fixture(points=20, scale=2.0, std_a=1.0, std_b=1.0):
    """Closed-form 1-D setting for the optimal-critic identity.

    The A->B translation is ``b = scale * a``; real data are centred
    Gaussians. Model densities are the push-forwards of the other domain's
    real data through the translation, and both critics are Bayes optimal.
    Returns a dict of arrays over ``points`` grid locations.
    """
    a = np.linspace(-2.0, 2.0, points)
    b = scale * a
    pa_star = _normal_pdf(a, std_a)
    pb_star = _normal_pdf(b, std_b)
    # density of G_BA(b'), b' ~ p*_B, evaluated at a; and G_AB(a'), a' ~ p*_A, at b
    pa_model = _normal_pdf(scale * a, std_b) * scale
    pb_model = _normal_pdf(b / scale, std_a) / scale
    c_a = bayes_critic(pa_star, pa_model)
    c_b = bayes_critic(pb_star, pb_model)
    return {
        "a": a, "b": b, "c_a": c_a, "c_b": c_b,
        "p_a_star": pa_star, "p_b_star": pb_star,
        "log_det_a_to_b": np.full(points, math.log(scale)),
        "log_det_b_to_a": np.full(points, -math.log(scale)),
    }


def critic_identity_residuals(fx=None) -> dict:
    """Max |C_A - transfer(C_B)| under each reading of the Jacobian factor."""
    fx = fx or critic_fixture()
    lit_ba = optimal_critic_transfer(fx["c_b"], fx["p_a_star"], fx["p_b_star"], fx["log_det_b_to_a"])
    lit_ab = optimal_critic_transfer(fx["c_b"], fx["p_a_star"], fx["p_b_star"], fx["log_det_a_to_b"])
    partner = critic_from_partner(fx["c_b"], fx["p_a_star"], fx["p_b_star"], fx["log_det_a_to_b"])
    return {
        "closed_form_jac_b_to_a": float(np.max(np.abs(fx["c_a"] - lit_ba))),
        "closed_form_jac_a_to_b": float(np.max(np.abs(fx["c_a"] - lit_ab))),
        "complement_relation": float(np.max(np.abs(fx["c_a"] - (1 - fx["c_b"])))),
        "latent_density_form": float(np.max(np.abs(fx["c_a"] - partner))),
    }


def suite_critic(model=None):
    res = critic_identity_residuals()
    checks = [
        _check("critic", "closed_form_jac_b_to_a", res["closed_form_jac_b_to_a"], 1e-6,
               "Jacobian dG_BA evaluated at b = G_AB(a)"),
        _check("critic", "closed_form_jac_a_to_b", res["closed_form_jac_a_to_b"], 1e-6,
               "Jacobian dG_AB evaluated at a"),
        _check("critic", "complement_relation", res["complement_relation"], 1e-6,
               "C_A(a) = 1 - C_B(G_AB(a))"),
    ]
    return checks


def suite_perm(model, n=500, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, model.dim))
    with no_tape():
        b = model.translate_a_to_b(a).data
    # pairs realized by the model itself, so only the permuted twin has nonzero MSE
    pairs = PairedSet(a, b, split="val")
    perm = np.roll(np.arange(model.dim), 1)
    rep = permutation_nonidentifiability_demo(model, perm, pairs)
    return [
        _check("perm", "nll_diff", rep["nll_diff"], 1e-9,
               f"mse {rep['mse_a_to_b']:.4g} vs permuted {rep['mse_a_to_b_perm']:.4g}"),
    ]


def suite_marginal(model, spec: DomainPairSpec | None = None, n=100_000):
    if model.dim != 2:
        return [Check("marginal", "skipped", 0.0, 0.02, True, f"d={model.dim} != 2")]
    # self-consistency floor: the model against a second stream of its own samples
    a1, b1 = model.sample_paired(n, seed=1)
    a2, b2 = model.sample_paired(n, seed=2)
    checks = [
        _check("marginal", "self_kl_a", histogram_kl(a1, a2), 0.02),
        _check("marginal", "self_kl_b", histogram_kl(b1, b2), 0.02),
    ]
    if spec is not None:
        kl = marginal_consistency_check(model, spec, n=n)
        checks.append(Check("marginal", "kl_a", kl["kl_a"], float("inf"), True, "reported"))
        checks.append(Check("marginal", "kl_b", kl["kl_b"], float("inf"), True, "reported"))
    return checks


def max_threads() -> int:
    raw = os.environ.get("ALIGNFLOW_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return max(1, min(4, os.cpu_count() or 1))


def run_suites(model, suites=SUITES, spec: DomainPairSpec | None = None) -> list[Check]:
    """Run the named suites (read-only over ``model``) and collect their checks."""
    suites = list(suites)
    for s in suites:
        if s not in SUITES:
            raise VerifyError(f"unknown suite {s!r}; choose from {', '.join(SUITES)} or all")
    calls = {
        "roundtrip": lambda: suite_roundtrip(model),
        "logdet": lambda: suite_logdet(model),
        "critic": lambda: suite_critic(model),
        "perm": lambda: suite_perm(model),
        "marginal": lambda: suite_marginal(model, spec),
    }
    with ThreadPoolExecutor(max_workers=min(max_threads(), len(suites))) as pool:
        futures = [pool.submit(calls[s]) for s in suites]
        return [c for f in futures for c in f.result()]
