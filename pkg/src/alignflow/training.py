"""Alternating critic / generator optimization of the hybrid objective."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import Adam, Tape, clip_gradients, no_tape, unique_parameters
from .domains import PairedSet
from .evaluation import translation_mse
from .objectives import (
    Critic,
    HybridObjectiveConfig,
    alignflow_objective,
    gan_loss,
    generator_adversarial_term,
)

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("epoch", "gan_a", "gan_b", "nll_a", "nll_b", "total", "val_mse_ab", "val_mse_ba")


class TrainingAborted(RuntimeError):
    def __init__(self, term: str, epoch: int, step: int):
        self.term = term
        self.epoch = epoch
        self.step = step
        super().__init__(f"non-finite {term} at epoch {epoch} (step {step})")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 16
    learning_rate: float = 2e-4
    lr_decay_start: int | None = None  # None: half of ``epochs``
    clip_norm: float = 10.0
    seed: int = 0
    critic_steps_per_gen_step: int = 1
    beta1: float = 0.5
    beta2: float = 0.999
    weight_decay: float = 0.0
    critic_learning_rate: float | None = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not self.clip_norm > 0:
            raise ValueError(f"clip_norm must be > 0, got {self.clip_norm}")
        if self.epochs < 1 or self.batch_size < 1 or self.critic_steps_per_gen_step < 0:
            raise ValueError("epochs and batch_size must be >= 1, critic steps >= 0")

    def lr_at(self, epoch: int, base: float | None = None) -> float:
        """Constant, then linear decay towards zero over the remaining epochs."""
        base = self.learning_rate if base is None else base
        start = self.epochs // 2 if self.lr_decay_start is None else self.lr_decay_start
        if epoch < start:
            return base
        return base * (self.epochs - epoch) / max(self.epochs - start, 1)

    def to_dict(self):
        return asdict(self)


class CSVMetricsSink:
    """Appends one CSV row per epoch; the header is written on open."""

    def __init__(self, path_or_file):
        self._own = not hasattr(path_or_file, "write")
        self._f = open(path_or_file, "w", newline="", encoding="utf-8") if self._own else path_or_file
        self._w = csv.writer(self._f, lineterminator="\n")
        self._w.writerow(METRIC_COLUMNS)

    def __call__(self, row: dict):
        self._w.writerow([row["epoch"]] + [format(float(row[c]), ".17g") for c in METRIC_COLUMNS[1:]])
        self._f.flush()

    def close(self):
        if self._own:
            self._f.close()


def make_critics(dim: int, seed: int, hidden: int = 64, n_hidden: int = 3):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC1]))
    return Critic(dim, "A", rng, hidden, n_hidden), Critic(dim, "B", rng, hidden, n_hidden)


@dataclass
class TrainResult:
    model: object
    critic_a: object
    critic_b: object
    history: list
    epochs_run: int


def _check_finite(value: float, term: str, epoch: int, step: int):
    if not math.isfinite(value):
        raise TrainingAborted(term, epoch, step)


def train(model, critic_a, critic_b, data_a, data_b, cfg: TrainConfig,
          obj: HybridObjectiveConfig, sink=None, validation: PairedSet | None = None,
          callback=None) -> TrainResult:
    """Fit ``model`` (and the critics, unless MLE-only) on unpaired data.

    Per step: ``critic_steps_per_gen_step`` ascent steps on the GAN value
    for both critics, then one descent step for the flows. Generator
    gradients are norm-clipped whenever a likelihood term is active.
    ``validation`` must be a validation split; test pairs are refused.
    """
    if isinstance(data_a, PairedSet) or isinstance(data_b, PairedSet):
        raise TypeError("train() takes unpaired arrays; paired sets are for evaluation only")
    if validation is not None and validation.split == "test":
        raise ValueError("train() refuses test pairs; pass a validation split")
    data_a = np.asarray(data_a, dtype=np.float64)
    data_b = np.asarray(data_b, dtype=np.float64)
    if len(data_a) == 0 or len(data_b) == 0:
        raise ValueError("train(): both datasets must be non-empty")
    for name, x in (("A", data_a), ("B", data_b)):
        if x.ndim != 2 or x.shape[1] != model.dim:
            raise ValueError(f"domain {name} data has shape {x.shape}, model dim is {model.dim}")

    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x7A]))
    model.initialize(data_a, data_b)

    gen_params = model.parameters()
    gen_opt = Adam(gen_params, cfg.learning_rate, cfg.beta1, cfg.beta2, weight_decay=cfg.weight_decay)
    use_gan = obj.uses_gan
    critic_params = unique_parameters(critic_a.parameters() + critic_b.parameters()) if use_gan else []
    critic_lr = cfg.critic_learning_rate or cfg.learning_rate
    critic_opt = Adam(critic_params, critic_lr, cfg.beta1, cfg.beta2) if critic_params else None

    n = max(len(data_a), len(data_b))
    steps = max(1, math.ceil(n / cfg.batch_size))
    history = []
    step_no = 0
    for epoch in range(cfg.epochs):
        gen_opt.learning_rate = cfg.lr_at(epoch)
        if critic_opt is not None:
            critic_opt.learning_rate = cfg.lr_at(epoch, critic_lr)
        order_a = rng.permutation(len(data_a))
        order_b = rng.permutation(len(data_b))
        sums = dict.fromkeys(("gan_a", "gan_b", "nll_a", "nll_b", "total"), 0.0)
        for i in range(steps):
            idx = np.arange(i * cfg.batch_size, (i + 1) * cfg.batch_size)
            batch_a = data_a[order_a[idx % len(data_a)]]
            batch_b = data_b[order_b[idx % len(data_b)]]

            if critic_opt is not None:
                with no_tape():
                    fake_a = model.translate_b_to_a(batch_b).data
                    fake_b = model.translate_a_to_b(batch_a).data
                for _ in range(cfg.critic_steps_per_gen_step):
                    with Tape() as tape:
                        value = None
                        if obj.use_gan_a:
                            value = gan_loss(critic_a, batch_a, fake_a)
                        if obj.use_gan_b:
                            vb = gan_loss(critic_b, batch_b, fake_b)
                            value = vb if value is None else value + vb
                        loss = -value
                    _check_finite(float(loss.data), "critic loss", epoch, step_no)
                    critic_opt.step(tape.gradient(loss, critic_params))

            for p in critic_params:
                p.requires_grad = False
            try:
                with Tape() as tape:
                    terms = alignflow_objective(model, critic_a, critic_b, batch_a, batch_b, obj)
                    gen_loss = terms.total
                    if obj.non_saturating and use_gan:
                        gen_loss = _non_saturating_loss(model, terms, critic_a, critic_b,
                                                        batch_a, batch_b, obj)
            finally:
                for p in critic_params:
                    p.requires_grad = True
            vals = terms.values()
            for key in ("nll_a", "nll_b", "gan_a", "gan_b", "total"):
                if key.startswith("gan") and not use_gan:
                    continue
                _check_finite(vals[key], key, epoch, step_no)
            grads = tape.gradient(gen_loss, gen_params)
            if obj.uses_mle:
                grads = clip_gradients(grads, cfg.clip_norm)
            gen_opt.step(grads)
            for key in sums:
                sums[key] += vals[key]
            step_no += 1

        row = {"epoch": epoch, **{k: v / steps for k, v in sums.items()}}
        if validation is not None:
            row["val_mse_ab"], row["val_mse_ba"] = translation_mse(model, validation)
        else:
            row["val_mse_ab"] = row["val_mse_ba"] = float("nan")
        history.append(row)
        if sink is not None:
            sink(row)
        if callback is not None:
            callback(row)
    return TrainResult(model, critic_a, critic_b, history, cfg.epochs)


def _non_saturating_loss(model, terms, critic_a, critic_b, batch_a, batch_b, obj):
    loss = obj.lambda_a * terms.nll_a + obj.lambda_b * terms.nll_b
    if obj.use_gan_a:
        loss = loss + generator_adversarial_term(critic_a, model.translate_b_to_a(batch_b), True)
    if obj.use_gan_b:
        loss = loss + generator_adversarial_term(critic_b, model.translate_a_to_b(batch_a), True)
    return loss
