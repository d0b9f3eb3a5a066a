"""scikit-learn style wrapper around model construction and training."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .autodiff import no_tape
from .flows import FlowSpec
from .model import AlignFlowModel, SharingSpec
from .objectives import HybridObjectiveConfig
from .training import TrainConfig, make_critics, train


class AlignFlowTranslator(TransformerMixin, BaseEstimator):
    """Unpaired A<->B translator.

    ``fit(X, Y)`` takes samples from domain A and domain B; the two arrays
    are unpaired and may differ in length. ``transform`` maps A to B and
    ``inverse_transform`` maps B back to A exactly.

    Parameters mirror the architecture, objective and training settings.
    ``lambda_a = lambda_b = 0`` gives adversarial-only training and
    ``mle_only=True`` drops the critics entirely.
    """

    def __init__(self, depth=6, hidden=32, n_hidden=3, scale_bound=2.0, shuffle_every=2,
                 lambda_a=1e-5, lambda_b=1e-5, mle_only=False, epochs=200, batch_size=16,
                 learning_rate=2e-4, clip_norm=10.0, sharing="none", random_state=0):
        self.depth = depth
        self.hidden = hidden
        self.n_hidden = n_hidden
        self.scale_bound = scale_bound
        self.shuffle_every = shuffle_every
        self.lambda_a = lambda_a
        self.lambda_b = lambda_b
        self.mle_only = mle_only
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.clip_norm = clip_norm
        self.sharing = sharing
        self.random_state = random_state

    def _seed(self):
        rs = self.random_state
        if rs is None:
            return int(np.random.SeedSequence().generate_state(1)[0])
        if isinstance(rs, np.random.RandomState):
            return int(rs.randint(0, 2**31 - 1))
        return int(rs)

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64, ensure_min_features=2)
        Y = check_array(y, dtype=np.float64, ensure_min_features=2)
        if X.shape[1] != Y.shape[1]:
            raise ValueError(f"domains must share a dimension; got {X.shape[1]} and {Y.shape[1]}")
        seed = self._seed()
        spec = FlowSpec(dim=X.shape[1], depth=self.depth, hidden=self.hidden, n_hidden=self.n_hidden,
                        scale_bound=self.scale_bound, shuffle_every=self.shuffle_every)
        model = AlignFlowModel.build(spec, SharingSpec(self.sharing), seed=seed)
        critic_a, critic_b = make_critics(spec.dim, seed)
        obj = HybridObjectiveConfig(self.lambda_a, self.lambda_b, mle_only=self.mle_only)
        cfg = TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                          learning_rate=self.learning_rate, clip_norm=self.clip_norm, seed=seed)
        result = train(model, critic_a, critic_b, X, Y, cfg, obj)
        self.model_ = model
        self.critics_ = (critic_a, critic_b)
        self.history_ = result.history
        self.n_features_in_ = X.shape[1]
        return self

    def _input(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, estimator was fit with {self.n_features_in_}")
        return X

    def transform(self, X):
        X = self._input(X)
        with no_tape():
            return self.model_.translate_a_to_b(X).data

    def inverse_transform(self, X):
        X = self._input(X)
        with no_tape():
            return self.model_.translate_b_to_a(X).data

    def score_samples(self, X, domain="A"):
        X = self._input(X)
        with no_tape():
            return self.model_.log_prob(X, domain).data

    def score(self, X, y=None):
        """Mean log-likelihood of ``X`` under domain A (plus domain B when ``y`` is given)."""
        s = float(np.mean(self.score_samples(X, "A")))
        if y is not None:
            s += float(np.mean(self.score_samples(y, "B")))
        return s

    def sample(self, n_samples=1, random_state=0):
        """Paired draws ``(a, b)`` through the shared latent."""
        check_is_fitted(self, "model_")
        return self.model_.sample_paired(n_samples, seed=random_state)
