"""Small streaming transducer with hand-written backpropagation.

Encoder:   h_t = tanh(x_t Wx + h_{t-1} Wh + b)             (causal)
Predictor: g_k = tanh(E[s_k] Wx + g_{k-1} Wh + b),  s = (blank, y_1, ..., y_U)
Joiner:    logp(t, u) = log_softmax(tanh(h_t We + g_u Wp + b) Wo + bo)

All recurrences run over a padded batch; the joiner runs per utterance and
produces one :class:`JointLattice` each.
"""

from __future__ import annotations

import hashlib
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lattice import JointLattice

CHECKPOINT_VERSION = 1

PARAM_SHAPES = {
    "enc_Wx": ("F", "H"),
    "enc_Wh": ("H", "H"),
    "enc_b": ("H",),
    "pred_E": ("V", "H"),
    "pred_Wx": ("H", "H"),
    "pred_Wh": ("H", "H"),
    "pred_b": ("H",),
    "join_We": ("H", "J"),
    "join_Wp": ("H", "J"),
    "join_b": ("J",),
    "out_W": ("J", "V"),
    "out_b": ("V",),
}


@dataclass
class TransducerParams:
    feature_dim: int
    hidden_dim: int
    joint_dim: int
    vocab_size: int
    blank_id: int = 0
    weights: dict = field(default_factory=dict, repr=False)

    def dims(self):
        return {"F": self.feature_dim, "H": self.hidden_dim,
                "J": self.joint_dim, "V": self.vocab_size}

    def shape_of(self, name):
        d = self.dims()
        return tuple(d[k] for k in PARAM_SHAPES[name])

    def config(self):
        return {"feature_dim": self.feature_dim, "hidden_dim": self.hidden_dim,
                "joint_dim": self.joint_dim, "vocab_size": self.vocab_size,
                "blank_id": self.blank_id}

    def copy(self):
        return TransducerParams(**self.config(),
                                weights={k: v.copy() for k, v in self.weights.items()})

    def zeros_like(self):
        return {k: np.zeros_like(v) for k, v in self.weights.items()}

    def check(self):
        for name in PARAM_SHAPES:
            w = self.weights.get(name)
            if w is None:
                raise ValueError(f"missing weight {name}")
            if w.shape != self.shape_of(name):
                raise ValueError(f"{name} has shape {w.shape}, expected {self.shape_of(name)}")
            if not np.all(np.isfinite(w)):
                raise ValueError(f"{name} has non-finite entries")
        return self


def init_params(feature_dim, hidden_dim, joint_dim, vocab_size, blank_id=0,
                seed=0, scale=None) -> TransducerParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init, biases at zero."""
    params = TransducerParams(feature_dim, hidden_dim, joint_dim, vocab_size, blank_id)
    rng = np.random.default_rng(seed)
    for name in PARAM_SHAPES:
        shape = params.shape_of(name)
        if len(shape) == 1:
            params.weights[name] = np.zeros(shape)
            continue
        bound = scale if scale is not None else 1.0 / np.sqrt(shape[0])
        params.weights[name] = rng.uniform(-bound, bound, size=shape)
    return params


def zero_params(feature_dim, hidden_dim, joint_dim, vocab_size, blank_id=0):
    params = TransducerParams(feature_dim, hidden_dim, joint_dim, vocab_size, blank_id)
    params.weights = {n: np.zeros(params.shape_of(n)) for n in PARAM_SHAPES}
    return params


# --- recurrences --------------------------------------------------------------

def _rnn_forward(inputs, Wh, b):
    """tanh recurrence over axis 1 given pre-projected inputs (B, L, H)."""
    B, L, H = inputs.shape
    out = np.empty((B, L, H))
    h = np.zeros((B, H))
    for k in range(L):
        h = np.tanh(inputs[:, k] + h @ Wh + b)
        out[:, k] = h
    return out


def _rnn_backward(out, d_out, Wh):
    """Gradients w.r.t. pre-projected inputs, Wh and b."""
    B, L, H = out.shape
    d_in = np.empty_like(out)
    dWh = np.zeros_like(Wh)
    db = np.zeros(H)
    carry = np.zeros((B, H))
    for k in range(L - 1, -1, -1):
        da = (d_out[:, k] + carry) * (1.0 - out[:, k] ** 2)
        d_in[:, k] = da
        if k > 0:
            dWh += out[:, k - 1].T @ da
        db += da.sum(axis=0)
        carry = da @ Wh.T
    return d_in, dWh, db


def _pad(seqs, width, fill=0):
    B = len(seqs)
    L = max((s.shape[0] for s in seqs), default=0)
    out = np.full((B, L) + ((width,) if width else ()), fill,
                  dtype=np.float64 if width else np.int64)
    for i, s in enumerate(seqs):
        out[i, :s.shape[0]] = s
    return out


def encode(params, features_list):
    """Encoder states, padded to (B, Tmax, H)."""
    w = params.weights
    x = _pad(features_list, params.feature_dim)
    return x, _rnn_forward(x @ w["enc_Wx"], w["enc_Wh"], w["enc_b"])


def predict(params, labels_list):
    """Predictor states over (blank, y_1..y_U), padded to (B, Umax+1, H)."""
    w = params.weights
    tokens = _pad([np.concatenate([[params.blank_id], y]).astype(np.int64)
                   for y in labels_list], 0, fill=params.blank_id)
    return tokens, _rnn_forward(w["pred_E"][tokens] @ w["pred_Wx"], w["pred_Wh"], w["pred_b"])


def log_softmax(logits):
    m = logits.max(axis=-1, keepdims=True)
    shifted = logits - m
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def joint(params, enc, pred):
    """Joiner on encoder (T, H) and predictor (U+1, H) states.

    Returns the (T, U+1, V) log-probabilities and the tanh activations.
    """
    w = params.weights
    z = np.tanh((enc @ w["join_We"])[:, None, :] + (pred @ w["join_Wp"])[None, :, :]
                + w["join_b"])
    return log_softmax(z @ w["out_W"] + w["out_b"]), z


@dataclass
class BatchCache:
    x: np.ndarray
    enc: np.ndarray
    tokens: np.ndarray
    pred: np.ndarray
    lengths: list
    zs: list
    logps: list


def forward_batch(params, features_list, labels_list):
    """Lattices for a batch plus the activations needed by :func:`backward_batch`."""
    x, enc = encode(params, features_list)
    tokens, pred = predict(params, labels_list)
    lattices, zs, logps = [], [], []
    lengths = []
    for i, (feats, labels) in enumerate(zip(features_list, labels_list)):
        T, U = feats.shape[0], len(labels)
        logp, z = joint(params, enc[i, :T], pred[i, :U + 1])
        lattices.append(JointLattice(logp, labels, params.blank_id))
        zs.append(z)
        logps.append(logp)
        lengths.append((T, U))
    return lattices, BatchCache(x, enc, tokens, pred, lengths, zs, logps)


def backward_batch(params, cache: BatchCache, lattice_grads):
    """Parameter gradients of ``sum_i <lattice_grads[i], logp_i>``."""
    w = params.weights
    grads = params.zeros_like()
    d_enc = np.zeros_like(cache.enc)
    d_pred = np.zeros_like(cache.pred)
    for i, ((T, U), z, logp, g) in enumerate(
            zip(cache.lengths, cache.zs, cache.logps, lattice_grads)):
        if g is None:
            continue
        d_logits = g - np.exp(logp) * g.sum(axis=-1, keepdims=True)
        J, V = z.shape[-1], d_logits.shape[-1]
        grads["out_W"] += z.reshape(-1, J).T @ d_logits.reshape(-1, V)
        grads["out_b"] += d_logits.sum(axis=(0, 1))
        da = (d_logits @ w["out_W"].T) * (1.0 - z ** 2)
        grads["join_b"] += da.sum(axis=(0, 1))
        d_je = da.sum(axis=1)
        d_jp = da.sum(axis=0)
        enc_i = cache.enc[i, :T]
        pred_i = cache.pred[i, :U + 1]
        grads["join_We"] += enc_i.T @ d_je
        grads["join_Wp"] += pred_i.T @ d_jp
        d_enc[i, :T] = d_je @ w["join_We"].T
        d_pred[i, :U + 1] = d_jp @ w["join_Wp"].T

    d_in, grads["enc_Wh"], grads["enc_b"] = _rnn_backward(cache.enc, d_enc, w["enc_Wh"])
    B, Tm, F = cache.x.shape
    grads["enc_Wx"] = cache.x.reshape(-1, F).T @ d_in.reshape(-1, d_in.shape[-1])

    d_in, grads["pred_Wh"], grads["pred_b"] = _rnn_backward(cache.pred, d_pred, w["pred_Wh"])
    H = d_in.shape[-1]
    emb = w["pred_E"][cache.tokens]
    grads["pred_Wx"] = emb.reshape(-1, H).T @ d_in.reshape(-1, H)
    d_emb = d_in.reshape(-1, H) @ w["pred_Wx"].T
    np.add.at(grads["pred_E"], cache.tokens.reshape(-1), d_emb)
    return grads


def forward_joint(params, features, labels):
    """Single-utterance lattice and cache."""
    lattices, cache = forward_batch(params, [np.asarray(features, dtype=np.float64)],
                                    [np.asarray(labels, dtype=np.int64)])
    return lattices[0], cache


def backward_joint(params, cache, lattice_grad):
    return backward_batch(params, cache, [lattice_grad])


# --- streaming session for greedy decoding -----------------------------------

class TransducerSession:
    """Step-wise access to the joint distribution for one utterance."""

    def __init__(self, params, features):
        self.params = params
        _, enc = encode(params, [np.asarray(features, dtype=np.float64)])
        self.enc = enc[0]
        w = params.weights
        self._enc_proj = self.enc @ w["join_We"]

    @property
    def num_frames(self):
        return self.enc.shape[0]

    def start(self):
        return self.advance(None, self.params.blank_id)

    def advance(self, state, token):
        w = self.params.weights
        h = np.zeros(self.params.hidden_dim) if state is None else state
        return np.tanh(w["pred_E"][token] @ w["pred_Wx"] + h @ w["pred_Wh"] + w["pred_b"])

    def logprobs(self, t, state):
        w = self.params.weights
        z = np.tanh(self._enc_proj[t] + state @ w["join_Wp"] + w["join_b"])
        return log_softmax(z @ w["out_W"] + w["out_b"])


# --- optimizer ---------------------------------------------------------------

@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict, repr=False)
    v: dict = field(default_factory=dict, repr=False)


def adam_step(params, grads, state: OptimizerState):
    """In-place adaptive-moment update of ``params.weights``."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, g in grads.items():
        m = state.m.setdefault(name, np.zeros_like(g))
        v = state.v.setdefault(name, np.zeros_like(g))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        params.weights[name] -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def clip_grads(grads, max_norm):
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm is not None and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


# --- checkpoints -------------------------------------------------------------

def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def save_checkpoint(path, params: TransducerParams, config: dict | None = None):
    """Write weights, model dims and the training config to an ``.npz`` file."""
    config = {} if config is None else config
    meta = {"version": CHECKPOINT_VERSION, "model": params.config(),
            "config": config, "config_hash": config_hash(config)}
    arrays = {"__meta__": np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)}
    arrays.update((f"w_{k}", params.weights[k]) for k in sorted(params.weights))
    # np.savez stamps entries with the wall clock; a fixed date keeps files byte-identical
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            with zf.open(zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0)), "w") as fh:
                np.lib.format.write_array(fh, np.ascontiguousarray(arr), allow_pickle=False)


def load_checkpoint(path):
    """Returns ``(params, config)``; raises ``ValueError`` on malformed files."""
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as npz:
            meta = json.loads(npz["__meta__"].tobytes().decode())
            weights = {k[2:]: npz[k].copy() for k in npz.files if k.startswith("w_")}
    except OSError as exc:
        raise ValueError(f"unreadable checkpoint {path}: {exc.strerror or exc}") from None
    except (KeyError, ValueError, UnicodeDecodeError, json.JSONDecodeError):
        raise ValueError(f"unreadable checkpoint {path}: not a checkpoint archive") from None
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta.get('version')!r}")
    if config_hash(meta["config"]) != meta["config_hash"]:
        raise ValueError("checkpoint config hash mismatch")
    params = TransducerParams(**meta["model"], weights=weights).check()
    return params, meta["config"]
