import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from rnnt_delay.data import CorpusSpec, generate
from rnnt_delay.estimator import StreamingTransducer
from rnnt_delay.exceptions import ShapeMismatch


@pytest.fixture(scope="module")
def corpus():
    return generate(CorpusSpec(num_train=24, num_dev=4, num_test=4))


def small(**kw):
    return StreamingTransducer(n_epochs=1, eval_interval=2, hidden_dim=8, joint_dim=8, **kw)


def test_params_and_clone():
    est = StreamingTransducer(scheme="fastemit", lambda_fe=0.01)
    params = est.get_params()
    assert params["scheme"] == "fastemit" and params["lambda_fe"] == 0.01
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    est.set_params(lambda_fe=0.1)
    assert est.lambda_fe == 0.1


def test_not_fitted(corpus):
    with pytest.raises(NotFittedError):
        small().predict(corpus["test"])


def test_fit_predict_utterances(corpus):
    est = small(scheme="selfalign", lambda_sa=0.01).fit(corpus["train"], dev=corpus["dev"])
    assert est.n_features_in_ == 8 and est.vocab_size_ == 12
    assert [r["step"] for r in est.curve_] == [2, 3]
    preds = est.predict(corpus["test"])
    assert len(preds) == 4 and all(p.dtype == np.int64 for p in preds)
    assert est.score(corpus["test"]) <= 1.0
    report = est.evaluate(corpus["test"])
    assert report.num_utterances == 4


def test_fit_arrays_matches_utterances(corpus):
    tr = corpus["train"]
    a = small().fit(tr)
    b = small().fit([u.features for u in tr], [u.labels for u in tr])
    for k in a.params_.weights:
        assert np.array_equal(a.params_.weights[k], b.params_.weights[k])


def test_constrained_needs_times(corpus):
    tr = corpus["train"]
    X, y = [u.features for u in tr], [u.labels for u in tr]
    with pytest.raises(ValueError, match="token_times"):
        small(scheme="constrained", sigma=4).fit(X, y)
    est = small(scheme="constrained", sigma=4).fit(X, y, token_times=[u.token_end_frames for u in tr])
    assert hasattr(est, "params_")


def test_validation(corpus):
    tr = corpus["train"][:3]
    X, y = [u.features for u in tr], [u.labels for u in tr]
    with pytest.raises(ValueError):
        small().fit(X, y[:2])
    with pytest.raises(ValueError):
        small().fit(X, [np.array([0, 2])] * 3)          # blank inside labels
    with pytest.raises(ValueError):
        small().fit(X, [np.array([-1])] * 3)
    bad = [x.copy() for x in X]
    bad[1][0, 0] = np.nan
    with pytest.raises(ValueError):
        small().fit(bad, y)
    with pytest.raises(ShapeMismatch):
        small().fit([X[0], X[1][:, :3]], y[:2])
    with pytest.raises(ValueError):
        small(vocab_size=5).fit(X, y)
    est = small().fit(X, y)
    with pytest.raises(ShapeMismatch):
        est.predict([X[0][:, :4]])


def test_save_load(tmp_path, corpus):
    est = small(scheme="fastemit", lambda_fe=0.003).fit(corpus["train"])
    est.save(tmp_path / "m.npz")
    back = StreamingTransducer.load(tmp_path / "m.npz")
    assert back.get_params() == {**est.get_params(), "vocab_size": 12}
    got = back.predict(corpus["test"])
    want = est.predict(corpus["test"])
    assert all(np.array_equal(a, b) for a, b in zip(got, want))
