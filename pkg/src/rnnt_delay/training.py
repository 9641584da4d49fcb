"""Mini-batch training of the transducer under each delay scheme."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import regularizers as reg
from .align import viterbi
from .data import BLANK_ID, BOUNDARY_ID
from .decode import DEFAULT_MAX_SYMBOLS, greedy_decode
from .exceptions import AllPathsMasked, ConfigError, DivergedLoss
from .lattice import nll_loss
from .model import (OptimizerState, TransducerSession, adam_step, backward_batch,
                    clip_grads, forward_batch, init_params)
from .metrics import matched_word_delays

log = logging.getLogger(__name__)

SCHEMES = ("baseline", "constrained", "fastemit", "selfalign")


@dataclass(frozen=True)
class TrainConfig:
    scheme: str = "baseline"
    lambda_sa: float = 0.0
    lambda_fe: float = 0.0
    sigma: float | None = None
    hidden_dim: int = 32
    joint_dim: int = 32
    lr: float = 1e-2
    batch_size: int = 8
    n_epochs: int = 10
    max_steps: int | None = None
    eval_interval: int = 250
    dev_limit: int | None = 100
    clip_norm: float | None = 5.0
    seed: int = 0
    max_symbols_per_frame: int = DEFAULT_MAX_SYMBOLS
    blank_id: int = BLANK_ID
    boundary_id: int = BOUNDARY_ID
    threads: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.lambda_sa < 0 or self.lambda_fe < 0:
            raise ConfigError("lambda values must be >= 0")
        if self.sigma is not None and (self.sigma < 0 or int(self.sigma) != self.sigma):
            raise ConfigError("sigma must be a non-negative integer or null (unbounded)")
        if self.batch_size < 1 or self.eval_interval < 1 or self.threads < 1:
            raise ConfigError("batch_size, eval_interval and threads must be >= 1")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown training keys: {', '.join(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)

    @property
    def hyper(self):
        """The scheme's tuning value, as used in report rows."""
        if self.scheme == "constrained":
            return math.inf if self.sigma is None else self.sigma
        if self.scheme == "fastemit":
            return self.lambda_fe
        if self.scheme == "selfalign":
            return self.lambda_sa
        return None

    @property
    def is_neutral(self):
        """True when the scheme reduces exactly to the plain transducer loss."""
        return (self.scheme == "baseline"
                or (self.scheme == "constrained" and self.sigma is None)
                or (self.scheme == "fastemit" and self.lambda_fe == 0)
                or (self.scheme == "selfalign" and self.lambda_sa == 0))


def utterance_loss(lattice, utt, cfg: TrainConfig):
    """Scheme loss for one utterance; ``None`` when every path is masked."""
    if cfg.scheme == "constrained":
        c = reg.ConstrainedConfig(cfg.sigma, cfg.boundary_id, tuple(utt.token_end_frames))
        try:
            return reg.constrained_loss(lattice, c)
        except AllPathsMasked:
            return None
    if cfg.scheme == "fastemit":
        return reg.fastemit_loss(lattice, reg.FastEmitConfig(cfg.lambda_fe))
    if cfg.scheme == "selfalign":
        return reg.selfalign_loss(lattice, reg.SelfAlignConfig(cfg.lambda_sa), viterbi(lattice))
    return nll_loss(lattice)


def _map(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def batch_gradients(params, batch, cfg: TrainConfig):
    """Mean scheme loss, parameter gradients and number of skipped utterances."""
    lattices, cache = forward_batch(params, [u.features for u in batch], [u.labels for u in batch])
    results = _map(lambda pair: utterance_loss(pair[0], pair[1], cfg),
                   list(zip(lattices, batch)), cfg.threads)
    used = [r for r in results if r is not None]
    skipped = len(results) - len(used)
    if not used:
        return None, None, skipped
    scale = 1.0 / len(used)
    lattice_grads = [None if r is None else r.grad * scale for r in results]
    grads = backward_batch(params, cache, lattice_grads)
    loss = 0.0
    for r in used:
        loss += r.loss
    return loss * scale, grads, skipped


def forced_alignment_delays(params, utterances, boundary_id=BOUNDARY_ID):
    """Word delays (frames) of the model's own Viterbi alignment vs ground truth."""
    delays = []
    for utt in utterances:
        lattices, _ = forward_batch(params, [utt.features], [utt.labels])
        frames = np.asarray(viterbi(lattices[0]).emit_frames)
        pred = frames[utt.labels == boundary_id]
        delays.extend((pred - utt.word_times[:len(pred)]).tolist())
    return delays


def dev_metrics(params, utterances, cfg: TrainConfig):
    """Forced-alignment mean delay (frames) and greedy-decoding WER."""
    if not utterances:
        return float("nan"), float("nan")
    delays = forced_alignment_delays(params, utterances, cfg.boundary_id)
    errors = words = 0
    for utt in utterances:
        hyp = greedy_decode(TransducerSession(params, utt.features), cfg.max_symbols_per_frame,
                            blank_id=cfg.blank_id, boundary_id=cfg.boundary_id)
        e, _ = matched_word_delays(hyp.words, hyp.word_times, utt.words, utt.word_times)
        errors += e
        words += len(utt.words)
    return float(np.sum(delays) / len(delays)), errors / words


def train(train_set, dev_set, cfg: TrainConfig, params=None, callback=None):
    """Train from scratch (or from ``params``); returns ``(params, curve)``.

    ``curve`` holds one dict per evaluation with keys ``step``, ``loss``
    (mean training loss since the previous evaluation),
    ``dev_mean_delay_frames`` and ``dev_wer``.
    """
    if not train_set:
        raise ConfigError("empty training set")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7]))
    if params is None:
        F = train_set[0].features.shape[1]
        V = int(max(max(u.labels.max(initial=0) for u in train_set), cfg.boundary_id,
                    cfg.blank_id)) + 1
        params = init_params(F, cfg.hidden_dim, cfg.joint_dim, V, cfg.blank_id,
                             seed=np.random.SeedSequence([cfg.seed, 3]))
    params = params.copy()
    opt = OptimizerState(lr=cfg.lr)
    dev = dev_set if cfg.dev_limit is None else dev_set[:cfg.dev_limit]

    n_batches = math.ceil(len(train_set) / cfg.batch_size)
    total_steps = cfg.n_epochs * n_batches
    if cfg.max_steps is not None:
        total_steps = min(total_steps, cfg.max_steps)

    curve = []
    window = []
    skipped_total = 0
    step = 0
    while step < total_steps:
        order = rng.permutation(len(train_set))
        for b in range(n_batches):
            if step >= total_steps:
                break
            batch = [train_set[i] for i in order[b * cfg.batch_size:(b + 1) * cfg.batch_size]]
            loss, grads, skipped = batch_gradients(params, batch, cfg)
            skipped_total += skipped
            step += 1
            if grads is not None:
                if not math.isfinite(loss):
                    raise DivergedLoss(f"non-finite loss {loss} at step {step}")
                clip_grads(grads, cfg.clip_norm)
                adam_step(params, grads, opt)
                window.append(loss)
            if step % cfg.eval_interval == 0 or step == total_steps:
                delay, dev_wer = dev_metrics(params, dev, cfg)
                row = {"step": step,
                       "loss": float(np.mean(window)) if window else float("nan"),
                       "dev_mean_delay_frames": delay,
                       "dev_wer": dev_wer}
                curve.append(row)
                window = []
                log.info("step %d loss %.4f dev_delay %.3f dev_wer %.4f",
                         step, row["loss"], delay, dev_wer)
                if callback is not None:
                    callback(row)
    if skipped_total:
        log.info("skipped %d fully-masked utterances", skipped_total)
    return params, curve
