"""Acceptance criteria, one test each; the summary prints a PASS/FAIL line per criterion."""

import math
import time

import numpy as np
import pytest

from alignflow.autodiff import Tape, no_tape
from alignflow.checkpoint import load_checkpoint, save_checkpoint, to_bytes
from alignflow.cli import main
from alignflow.domains import DomainPairSpec, generate, read_points
from alignflow.evaluation import marginal_consistency_check, permutation_nonidentifiability_demo
from alignflow.experiments import compare_objectives, summarize
from alignflow.flows import FlowSpec, perturb_parameters
from alignflow.model import AlignFlowModel
from alignflow.objectives import Critic, HybridObjectiveConfig, alignflow_objective
from alignflow.training import TrainConfig, make_critics, train
from alignflow.verify import critic_identity_residuals, fresh_model, logdet_errors

pytestmark = pytest.mark.acceptance


def test_1_exact_cycle_consistency(report):
    t0 = time.time()
    worst_fwd = worst_rev = 0.0
    for seed in range(100):
        m = fresh_model(dim=16, depth=8, hidden=32, seed=seed)
        rng = np.random.default_rng(seed)
        worst_fwd = max(worst_fwd, m.cycle_loss(rng.standard_normal((1000, 16))))
        worst_rev = max(worst_rev, m.cycle_loss_reverse(rng.standard_normal((1000, 16))))
    secs = time.time() - t0
    ok = worst_fwd < 1e-9 and worst_rev < 1e-9 and secs < 60
    report(1, "cycle consistency", ok,
           f"max cycle_loss={worst_fwd:.2e} reverse={worst_rev:.2e} (tol 1e-9) over 100 seeds, {secs:.1f}s")
    assert worst_fwd < 1e-9 and worst_rev < 1e-9
    assert secs < 60


def test_2_change_of_variables(report):
    t0 = time.time()
    worst = 0.0
    for dim in range(2, 7):
        for seed in range(3):
            m = fresh_model(dim=dim, depth=4, hidden=16, seed=100 * dim + seed)
            pts = np.random.default_rng(seed).standard_normal((50, dim))
            for flow in (m.flow_a, m.flow_b):
                worst = max(worst, float(np.max(logdet_errors(flow, pts))))
    secs = time.time() - t0
    ok = worst < 1e-4 and secs < 60
    report(2, "log-det vs numeric Jacobian", ok, f"max rel err={worst:.2e} (tol 1e-4) for d=2..6, {secs:.1f}s")
    assert worst < 1e-4 and secs < 60


def _objective_fd_errors(seed=0, h=1e-5):
    model = fresh_model(dim=2, depth=2, hidden=4, seed=seed)
    rng = np.random.default_rng(seed + 1)
    ca = Critic(2, "A", rng, hidden=4, n_hidden=1)
    cb = Critic(2, "B", rng, hidden=4, n_hidden=1)
    perturb_parameters(ca.parameters() + cb.parameters(), rng, 0.5)
    xa = rng.standard_normal((8, 2))
    xb = rng.standard_normal((8, 2)) * 1.5 + 0.5
    cfg = HybridObjectiveConfig(0.3, 0.7)
    params = model.parameters() + ca.parameters() + cb.parameters()

    def value(term):
        with no_tape():
            return getattr(alignflow_objective(model, ca, cb, xa, xb, cfg), term).item()

    errors = {}
    for term in ("gan_a", "gan_b", "nll_a", "nll_b", "total"):
        with Tape() as tape:
            out = getattr(alignflow_objective(model, ca, cb, xa, xb, cfg), term)
        grads = tape.gradient(out, params)
        worst_abs, scale = 0.0, 0.0
        for p in params:
            numeric = np.zeros_like(p.data)
            for idx in np.ndindex(p.data.shape):
                keep = p.data[idx]
                p.data[idx] = keep + h
                up = value(term)
                p.data[idx] = keep - h
                down = value(term)
                p.data[idx] = keep
                numeric[idx] = (up - down) / (2 * h)
            worst_abs = max(worst_abs, float(np.max(np.abs(grads[p] - numeric))))
            scale = max(scale, float(np.max(np.abs(numeric))))
        errors[term] = worst_abs / scale
    return errors


def test_3_gradients_of_every_objective_term(report):
    t0 = time.time()
    errors = {}
    for seed in (0, 1):
        for term, err in _objective_fd_errors(seed).items():
            errors[term] = max(errors.get(term, 0.0), err)
    secs = time.time() - t0
    ok = all(e < 1e-4 for e in errors.values()) and secs < 120
    detail = " ".join(f"{k}={v:.1e}" for k, v in errors.items())
    report(3, "autodiff vs finite differences", ok, f"{detail} (tol 1e-4), {secs:.1f}s")
    for term, err in errors.items():
        assert err < 1e-4, term
    assert secs < 120


def test_4_optimal_critic_identity(report):
    # the closed-form transfer, read with each Jacobian convention, against the Bayes critic
    res = critic_identity_residuals()
    a_b = res["closed_form_jac_b_to_a"]
    b_a = res["closed_form_jac_a_to_b"]
    ok = a_b < 1e-6 and b_a < 1e-6
    report(4, "optimal-critic identity", ok,
           f"residual with dG_BA Jacobian={a_b:.3e}, with dG_AB Jacobian={b_a:.3e} (tol 1e-6); "
           f"complement relation={res['complement_relation']:.1e}, latent-density form={res['latent_density_form']:.3e}")
    assert a_b < 1e-6, "closed form with dG_BA Jacobian"
    assert b_a < 1e-6, "closed form with dG_AB Jacobian"


def test_5_permutation_nonidentifiability(report):
    t0 = time.time()
    spec = DomainPairSpec(base="gaussian_mixture", true_map={"name": "rotation", "theta": math.pi / 4})
    tr, _, test = generate(spec)
    model = AlignFlowModel.build(FlowSpec(dim=2), seed=0)
    ca, cb = make_critics(2, 0)
    train(model, ca, cb, tr.a, tr.b, TrainConfig(epochs=30), HybridObjectiveConfig.mle())
    rep = permutation_nonidentifiability_demo(model, [1, 0], test)
    secs = time.time() - t0
    ok = rep["nll_diff"] < 1e-9 and rep["mse_diff"] > 0 and secs < 300
    report(5, "latent permutation keeps NLL", ok,
           f"nll diff={rep['nll_diff']:.1e} (tol 1e-9); mse a->b {rep['mse_a_to_b']:.4f} "
           f"vs permuted {rep['mse_a_to_b_perm']:.4f}, {secs:.1f}s")
    assert rep["nll_diff"] < 1e-9
    assert rep["mse_diff"] > 0
    assert secs < 300


def test_6_mle_training_efficacy(report):
    t0 = time.time()
    spec = DomainPairSpec(base="two_moons", noise_scale=0.125, n_train=500)
    tr, _, _ = generate(spec)
    model = AlignFlowModel.build(FlowSpec(dim=2, depth=6), seed=0)
    ca, cb = make_critics(2, 0)

    def nll():
        with no_tape():
            return (-float(np.mean(model.log_prob(tr.a, "A").data)),
                    -float(np.mean(model.log_prob(tr.b, "B").data)))

    before = nll()
    train(model, ca, cb, tr.a, tr.b, TrainConfig(epochs=200), HybridObjectiveConfig.mle())
    after = nll()
    kl = marginal_consistency_check(model, spec)
    secs = time.time() - t0
    gains = [b - a for b, a in zip(before, after)]
    ok = min(gains) >= 1.0 and max(kl["kl_a"], kl["kl_b"]) < 0.15 and secs < 600
    report(6, "MLE training on two moons", ok,
           f"nll A {before[0]:.3f}->{after[0]:.3f}, B {before[1]:.3f}->{after[1]:.3f} (need gain >= 1.0); "
           f"kl_a={kl['kl_a']:.3f} kl_b={kl['kl_b']:.3f} (tol 0.15), {secs:.1f}s")
    assert min(gains) >= 1.0
    assert kl["kl_a"] < 0.15 and kl["kl_b"] < 0.15
    assert secs < 600


def test_7_hybrid_beats_both_limits(report):
    t0 = time.time()
    spec = DomainPairSpec(base="gaussian_mixture", true_map={"name": "rotation", "theta": math.pi / 4})
    lines = []
    results = compare_objectives(spec, seeds=range(5), log=lambda r: lines.append(
        f"seed {r.seed}: adv={r.adversarial:.2e} mle={r.mle:.2e} hybrid={r.hybrid:.2e} (lambda={r.best_lambda:g})"))
    s = summarize(results)
    secs = time.time() - t0
    beats_adv = s["margin_vs_adversarial"] > s["needed_vs_adversarial"]
    beats_mle = s["margin_vs_mle"] > s["needed_vs_mle"]
    ok = beats_adv and beats_mle and secs < 1800
    m, sd = s["mean"], s["std"]
    report(7, "hybrid vs adversarial-only vs MLE-only", ok,
           f"test mse hybrid {m['hybrid']:.2e}+-{sd['hybrid']:.1e}, adv {m['adversarial']:.2e}+-{sd['adversarial']:.1e}, "
           f"mle {m['mle']:.2e}+-{sd['mle']:.1e}; margin vs adv {s['margin_vs_adversarial']:.1e} "
           f"(need > {s['needed_vs_adversarial']:.1e}), vs mle {s['margin_vs_mle']:.1e} "
           f"(need > {s['needed_vs_mle']:.1e}), {secs:.0f}s | " + "; ".join(lines))
    assert beats_mle, "hybrid vs MLE-only"
    assert beats_adv, "hybrid vs adversarial-only"
    assert secs < 1800


def test_8_interpolation_endpoints(report, tmp_path):
    t0 = time.time()
    m = fresh_model(seed=8)
    ca, cb = make_critics(2, 8, 8, 1)
    meta = {"architecture": FlowSpec(dim=2, depth=6, hidden=16).to_dict(),
            "sharing": {"mode": "none", "n_layers": 0}, "model_seed": 8, "critic": {"hidden": 8, "n_hidden": 1}}
    save_checkpoint(tmp_path / "m.ckpt", m, ca, cb, meta)
    a1, a2 = [0.7, -1.3], [-0.4, 2.1]
    code = main(["interpolate", "--checkpoint", str(tmp_path / "m.ckpt"), "--a1=0.7,-1.3", "--a2=-0.4,2.1",
                 "--steps", "9", "--out", str(tmp_path / "i.csv")])
    rows, _ = read_points(tmp_path / "i.csv")
    with no_tape():
        dec1 = m.decode(m.encode([a1], "A")[0], "A").data[0]
        dec2 = m.decode(m.encode([a2], "A")[0], "A").data[0]
        pair_err = float(np.max(np.abs(m.translate_a_to_b(rows[:, 1:3]).data - rows[:, 3:5])))
    end_err = max(float(np.max(np.abs(rows[0, 1:3] - dec2))), float(np.max(np.abs(rows[-1, 1:3] - dec1))))
    secs = time.time() - t0
    ok = code == 0 and end_err < 1e-9 and pair_err < 1e-9 and secs < 1
    report(8, "interpolation endpoints", ok,
           f"endpoint err={end_err:.1e} pair err={pair_err:.1e} (tol 1e-9), {secs:.2f}s")
    assert code == 0
    assert end_err < 1e-9 and pair_err < 1e-9
    assert secs < 1


def test_9_persistence(report, tmp_path):
    t0 = time.time()
    m = fresh_model(seed=9)
    ca, cb = make_critics(2, 9, 8, 1)
    meta = {"architecture": FlowSpec(dim=2, depth=6, hidden=16).to_dict(),
            "sharing": {"mode": "none", "n_layers": 0}, "model_seed": 9, "critic": {"hidden": 8, "n_hidden": 1}}
    raw = save_checkpoint(tmp_path / "m.ckpt", m, ca, cb, meta)
    m2, ca2, cb2, meta2 = load_checkpoint(tmp_path / "m.ckpt")
    same_bytes = to_bytes(m2, ca2, cb2, meta2) == raw == (tmp_path / "m.ckpt").read_bytes()
    probe = np.random.default_rng(0).standard_normal((256, 2)) * 2
    with no_tape():
        exact = all(np.array_equal(m.log_prob(probe, d).data, m2.log_prob(probe, d).data) for d in "AB")
    secs = time.time() - t0
    ok = same_bytes and exact and secs < 1
    report(9, "checkpoint round trip", ok, f"bytes identical={same_bytes} log_prob exact={exact}, {secs:.2f}s")
    assert same_bytes and exact
    assert secs < 1
