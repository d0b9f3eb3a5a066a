import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from alignflow.domains import DomainPairSpec, generate
from alignflow.estimator import AlignFlowTranslator


@pytest.fixture(scope="module")
def data():
    tr, _, test = generate(DomainPairSpec(base="gaussian_mixture", n_train=60, n_test=30))
    return tr.a, tr.b[:45], test


@pytest.fixture(scope="module")
def fitted(data):
    a, b, _ = data
    return AlignFlowTranslator(depth=2, hidden=8, epochs=2, lambda_a=0.01, lambda_b=0.01).fit(a, b)


def test_params_roundtrip():
    est = AlignFlowTranslator(depth=3, lambda_a=0.5)
    p = est.get_params()
    assert p["depth"] == 3 and p["lambda_a"] == 0.5 and p["random_state"] == 0
    c = clone(est).set_params(hidden=4)
    assert c.hidden == 4 and c.depth == 3


def test_transform_inverse_exact(fitted, data):
    x = data[2].a
    b = fitted.transform(x)
    assert b.shape == x.shape
    assert np.max(np.abs(fitted.inverse_transform(b) - x)) < 1e-9


def test_fit_attributes(fitted):
    assert fitted.n_features_in_ == 2
    assert len(fitted.history_) == 2
    a, b = fitted.sample(5, random_state=1)
    np.testing.assert_allclose(fitted.transform(a), b, atol=1e-9)


def test_score_is_mean_log_likelihood(fitted, data):
    x = data[2].a
    assert fitted.score(x) == pytest.approx(np.mean(fitted.score_samples(x, "A")))
    both = fitted.score(x, data[2].b)
    assert both == pytest.approx(fitted.score(x) + np.mean(fitted.score_samples(data[2].b, "B")))


def test_deterministic_fit(data):
    a, b, test = data
    kw = dict(depth=2, hidden=8, epochs=1, random_state=7)
    t1 = AlignFlowTranslator(**kw).fit(a, b).transform(test.a)
    t2 = AlignFlowTranslator(**kw).fit(a, b).transform(test.a)
    assert np.array_equal(t1, t2)


def test_mle_only_and_sharing(data):
    a, b, test = data
    est = AlignFlowTranslator(depth=2, hidden=8, epochs=1, mle_only=True, sharing="full").fit(a, b)
    np.testing.assert_allclose(est.transform(test.a), test.a, atol=1e-12)


def test_errors(fitted, data):
    with pytest.raises(NotFittedError):
        AlignFlowTranslator().transform(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        fitted.transform(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        AlignFlowTranslator(epochs=1).fit(np.zeros((4, 2)), np.zeros((4, 3)))
