"""Scikit-learn style wrapper around training, decoding and evaluation."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .data import BLANK_ID, BOUNDARY_ID, Utterance, split_words
from .decode import DEFAULT_MAX_SYMBOLS, greedy_decode, word_errors
from .metrics import DEFAULT_FRAME_MS, evaluate
from .model import TransducerSession, init_params, load_checkpoint, save_checkpoint
from .training import TrainConfig, train
from .validation import check_features, check_sequences, check_times


class StreamingTransducer(BaseEstimator):
    """Recurrent transducer trained under one delay scheme.

    ``X`` is a list of ``(T_i, F)`` feature matrices and ``y`` a list of
    label sequences.  Alternatively pass a list of :class:`Utterance` as
    ``X`` and leave ``y`` empty; their token end frames then feed the
    constrained scheme.

    >>> est = StreamingTransducer(scheme="selfalign", lambda_sa=0.01, n_epochs=2)
    >>> est.fit(corpus["train"]).predict(corpus["test"][:3])   # doctest: +SKIP
    """

    def __init__(self, scheme="baseline", lambda_sa=0.0, lambda_fe=0.0, sigma=None,
                 hidden_dim=32, joint_dim=32, lr=1e-2, batch_size=8, n_epochs=10,
                 max_steps=None, eval_interval=250, dev_limit=100, clip_norm=5.0,
                 seed=0, max_symbols_per_frame=DEFAULT_MAX_SYMBOLS, blank_id=BLANK_ID,
                 boundary_id=BOUNDARY_ID, vocab_size=None, threads=1):
        self.scheme = scheme
        self.lambda_sa = lambda_sa
        self.lambda_fe = lambda_fe
        self.sigma = sigma
        self.hidden_dim = hidden_dim
        self.joint_dim = joint_dim
        self.lr = lr
        self.batch_size = batch_size
        self.n_epochs = n_epochs
        self.max_steps = max_steps
        self.eval_interval = eval_interval
        self.dev_limit = dev_limit
        self.clip_norm = clip_norm
        self.seed = seed
        self.max_symbols_per_frame = max_symbols_per_frame
        self.blank_id = blank_id
        self.boundary_id = boundary_id
        self.vocab_size = vocab_size
        self.threads = threads

    def _train_config(self) -> TrainConfig:
        params = self.get_params()
        params.pop("vocab_size")
        return TrainConfig(**params)

    def _as_utterances(self, X, y=None, token_times=None, prefix="utt"):
        if y is None and len(X) and isinstance(X[0], Utterance):
            for u in X:
                check_features(u.features, u.id, getattr(self, "n_features_in_", None))
            return list(X)
        feats, labels = check_sequences(X, y, getattr(self, "n_features_in_", None),
                                        self.vocab_size, self.blank_id)
        if labels is None:
            raise ValueError("labels are required")
        if token_times is None:
            if self.scheme == "constrained":
                raise ValueError("the constrained scheme needs token_times")
            token_times = [np.zeros(len(l), dtype=np.int64) for l in labels]
        token_times = list(token_times)
        if len(token_times) != len(labels):
            raise ValueError("token_times must have one entry per sequence")
        out = []
        for i, (x, l, t) in enumerate(zip(feats, labels, token_times)):
            t = check_times(t, len(l), x.shape[0], f"token_times[{i}]")
            out.append(Utterance(f"{prefix}-{i:05d}", x, l, t, self.boundary_id))
        return out

    def fit(self, X, y=None, token_times=None, dev=None):
        """Train from scratch.  ``dev`` (utterances) drives the training curve."""
        cfg = self._train_config()
        train_set = self._as_utterances(X, y, token_times, "train")
        F = train_set[0].features.shape[1]
        seen = max(int(u.labels.max(initial=0)) for u in train_set)
        V = self.vocab_size or max(seen, self.boundary_id, self.blank_id) + 1
        if seen >= V:
            raise ValueError(f"label id {seen} does not fit vocab_size {V}")
        params = init_params(F, cfg.hidden_dim, cfg.joint_dim, V, cfg.blank_id,
                             seed=np.random.SeedSequence([cfg.seed, 3]))
        dev_set = [] if dev is None else list(dev)
        self.params_, self.curve_ = train(train_set, dev_set, cfg, params=params)
        self.n_features_in_ = F
        self.vocab_size_ = V
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("call fit() or load() first")

    def decode(self, X):
        """Greedy hypotheses (tokens and emission frames) for each sequence."""
        self._check_fitted()
        if len(X) and isinstance(X[0], Utterance):
            X = [u.features for u in X]
        feats, _ = check_sequences(X, feature_dim=self.n_features_in_)
        return [greedy_decode(TransducerSession(self.params_, x), self.max_symbols_per_frame,
                              blank_id=self.blank_id, boundary_id=self.boundary_id)
                for x in feats]

    def predict(self, X):
        return [np.asarray(h.tokens, dtype=np.int64) for h in self.decode(X)]

    def score(self, X, y=None):
        """One minus the corpus word error rate."""
        if y is None:
            y = [u.labels for u in X]
        hyps = self.predict(X)
        errors = words = 0
        for h, r in zip(hyps, y):
            ref = split_words(r, self.boundary_id)
            errors += word_errors(split_words(h, self.boundary_id), ref)
            words += len(ref)
        if words == 0:
            raise ValueError("references contain no words")
        return 1.0 - errors / words

    def evaluate(self, utterances, frame_ms=DEFAULT_FRAME_MS):
        """Delay/WER report on utterances with ground-truth times."""
        self._check_fitted()
        return evaluate(self.params_, list(utterances), frame_ms,
                        self.max_symbols_per_frame, self.boundary_id)

    def save(self, path):
        self._check_fitted()
        save_checkpoint(path, self.params_, self._train_config().to_dict())

    @classmethod
    def load(cls, path):
        params, config = load_checkpoint(path)
        est = cls(**config, vocab_size=params.vocab_size)
        est.params_ = params
        est.curve_ = []
        est.n_features_in_ = params.feature_dim
        est.vocab_size_ = params.vocab_size
        return est
