"""Synthetic aligned corpus with exact token and word emission times.

Vocabulary layout: id 0 is blank, id 1 is the word-boundary token, ids
``2 .. V-1`` are letters.

A "future-cue" token (letters and boundaries alike, with probability
``future_cue_prob``) is rendered from a template shared by all cue tokens,
blended with ``cue_strength`` of its own template.  With ``cue_lag == 0`` only
its final frame carries the clean class template; with ``cue_lag > 0`` every
frame of the segment is confusable and the token's identity code is added to
the frame ``cue_lag`` frames after the segment end, so a causal model must
wait past the ground-truth time to be sure.

Every word is followed by a boundary token, so the word count equals the
number of boundary tokens and a word's time is the end frame of its boundary.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .exceptions import InvalidSpec, ParseError

BLANK_ID = 0
BOUNDARY_ID = 1
SPLITS = ("train", "dev", "test")
_SPLIT_CODES = {"train": 1, "dev": 2, "test": 3}
CUE_TOKENS = ("all", "boundary", "letters")


@dataclass(frozen=True)
class CorpusSpec:
    seed: int = 0
    num_train: int = 2000
    num_dev: int = 200
    num_test: int = 200
    vocab_size: int = 12
    feature_dim: int = 8
    min_segment: int = 2
    max_segment: int = 5
    noise_std: float = 0.3
    future_cue_prob: float = 1.0
    min_words: int = 3
    max_words: int = 8
    max_word_len: int = 2
    cue_lag: int = 5
    cue_strength: float = 0.15
    boundary_strength: float | None = 0.1
    cue_tokens: str = "all"
    tail_frames: int = 2

    def validate(self):
        if self.min_segment < 1:
            raise InvalidSpec(f"min_segment must be >= 1 (d_min >= 1), got {self.min_segment}")
        if self.max_segment < self.min_segment:
            raise InvalidSpec("max_segment must be >= min_segment")
        if not 0.0 <= self.future_cue_prob <= 1.0:
            raise InvalidSpec("future_cue_prob must lie in [0, 1]")
        if self.noise_std < 0:
            raise InvalidSpec("noise_std must be >= 0")
        if self.vocab_size < 4:
            raise InvalidSpec("vocab_size must be >= 4 (blank, boundary, two letters)")
        if self.feature_dim < 1:
            raise InvalidSpec("feature_dim must be >= 1")
        if self.cue_tokens not in CUE_TOKENS:
            raise InvalidSpec(f"cue_tokens must be one of {CUE_TOKENS}")
        for name in ("cue_strength", "boundary_strength"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise InvalidSpec(f"{name} must lie in [0, 1]")
        for name in ("num_train", "num_dev", "num_test", "tail_frames", "cue_lag"):
            if getattr(self, name) < 0:
                raise InvalidSpec(f"{name} must be >= 0")
        if not 1 <= self.min_words <= self.max_words:
            raise InvalidSpec("need 1 <= min_words <= max_words")
        if self.max_word_len < 1:
            raise InvalidSpec("max_word_len must be >= 1")
        return self

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise InvalidSpec(f"unknown corpus spec keys: {', '.join(unknown)}")
        return cls(**d).validate()

    def to_dict(self):
        return asdict(self)


@dataclass(eq=False)
class Utterance:
    id: str
    features: np.ndarray
    labels: np.ndarray
    token_end_frames: np.ndarray
    boundary_id: int = field(default=BOUNDARY_ID, repr=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        self.token_end_frames = np.asarray(self.token_end_frames, dtype=np.int64).reshape(-1)

    @property
    def num_frames(self):
        return self.features.shape[0]

    @property
    def word_times(self) -> np.ndarray:
        return word_end_times(self.labels, self.token_end_frames, self.boundary_id)

    @property
    def words(self):
        return split_words(self.labels, self.boundary_id)

    def __eq__(self, other):
        if not isinstance(other, Utterance):
            return NotImplemented
        return (self.id == other.id
                and self.features.shape == other.features.shape
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.token_end_frames, other.token_end_frames))


def split_words(tokens, boundary_id=BOUNDARY_ID):
    """Words as tuples of letter ids; a trailing word without boundary counts."""
    words, cur = [], []
    for tok in tokens:
        if tok == boundary_id:
            words.append(tuple(cur))
            cur = []
        else:
            cur.append(int(tok))
    if cur:
        words.append(tuple(cur))
    return words


def word_end_times(tokens, times, boundary_id=BOUNDARY_ID) -> np.ndarray:
    """Time of each word's final token: its boundary, else the utterance's last token."""
    tokens = np.asarray(tokens)
    times = np.asarray(times)
    out = [int(times[i]) for i, tok in enumerate(tokens) if tok == boundary_id]
    if len(tokens) and tokens[-1] != boundary_id:
        out.append(int(times[-1]))
    return np.asarray(out, dtype=np.int64)


def make_templates(spec: CorpusSpec):
    """Class templates (V, F), identity codes (V, F) and the confusable template (F,)."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0]))
    V, F = spec.vocab_size, spec.feature_dim
    class_t = rng.standard_normal((V, F))
    class_t[BLANK_ID] = 0.0
    code_t = rng.standard_normal((V, F))
    confusable = rng.standard_normal(F)
    return class_t, code_t, confusable


def _sample_words(rng, spec):
    letters = np.arange(2, spec.vocab_size)
    n_words = rng.integers(spec.min_words, spec.max_words + 1)
    labels = []
    for _ in range(n_words):
        n_letters = rng.integers(1, spec.max_word_len + 1)
        prev = -1
        for _ in range(n_letters):
            tok = prev
            while tok == prev:
                tok = int(rng.choice(letters))
            labels.append(tok)
            prev = tok
        labels.append(BOUNDARY_ID)
    return np.asarray(labels, dtype=np.int64)


def generate_utterance(spec: CorpusSpec, split: str, index: int, templates=None) -> Utterance:
    """One utterance, seeded only by ``(seed, split, index)``."""
    if templates is None:
        templates = make_templates(spec)
    class_t, code_t, confusable = templates
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, _SPLIT_CODES[split], index]))
    labels = _sample_words(rng, spec)
    durations = rng.integers(spec.min_segment, spec.max_segment + 1, size=len(labels))
    cue = rng.random(len(labels)) < spec.future_cue_prob
    if spec.cue_tokens == "boundary":
        cue &= labels == BOUNDARY_ID
    elif spec.cue_tokens == "letters":
        cue &= labels != BOUNDARY_ID
    ends = np.cumsum(durations) - 1
    tail = max(spec.tail_frames, spec.cue_lag)

    s_letter = spec.cue_strength
    s_boundary = s_letter if spec.boundary_strength is None else spec.boundary_strength
    mean = np.zeros((int(ends[-1]) + 1 + tail, spec.feature_dim))
    for tok, d, end, c in zip(labels, durations, ends, cue):
        seg = mean[end - d + 1:end + 1]
        seg[:] = class_t[tok]
        if c:
            s = s_boundary if tok == BOUNDARY_ID else s_letter
            blurred = (1.0 - s) * confusable + s * class_t[tok]
            if spec.cue_lag == 0:
                seg[:-1] = blurred
            else:
                seg[:] = blurred
    if spec.cue_lag > 0:
        for tok, end, c in zip(labels, ends, cue):
            if c:
                mean[end + spec.cue_lag] += code_t[tok]
    features = mean + spec.noise_std * rng.standard_normal(mean.shape)
    return Utterance(f"{split}-{index:05d}", features, labels, ends)


def generate(spec: CorpusSpec) -> dict:
    """Train/dev/test splits keyed by split name."""
    spec.validate()
    templates = make_templates(spec)
    sizes = {"train": spec.num_train, "dev": spec.num_dev, "test": spec.num_test}
    return {split: [generate_utterance(spec, split, i, templates) for i in range(n)]
            for split, n in sizes.items()}


# --- corpus files -----------------------------------------------------------
#
# One JSON object per line with keys in this order:
#   id, T, F, labels, token_end_frames, features
# ``features`` is the row-major flattening of the T x F matrix.  Floats are
# written with repr precision so a save/load round trip is exact.

def utterance_to_record(utt: Utterance) -> dict:
    T, F = utt.features.shape
    return {
        "id": utt.id,
        "T": int(T),
        "F": int(F),
        "labels": [int(x) for x in utt.labels],
        "token_end_frames": [int(x) for x in utt.token_end_frames],
        "features": [float(x) for x in utt.features.reshape(-1)],
    }


def record_to_utterance(rec, lineno=None, path=None) -> Utterance:
    try:
        T, F = int(rec["T"]), int(rec["F"])
        flat = rec["features"]
        if len(flat) != T * F:
            raise ParseError(f"features has {len(flat)} values, expected T*F = {T * F}",
                             lineno, path)
        labels = rec["labels"]
        ends = rec["token_end_frames"]
        if len(labels) != len(ends):
            raise ParseError("labels and token_end_frames differ in length", lineno, path)
        feats = np.asarray(flat, dtype=np.float64).reshape(T, F)
        return Utterance(str(rec["id"]), feats, labels, ends)
    except KeyError as exc:
        raise ParseError(f"missing field {exc.args[0]!r}", lineno, path) from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"bad record: {exc}", lineno, path) from None


def save(utterances, path):
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for utt in utterances:
            fh.write(json.dumps(utterance_to_record(utt)))
            fh.write("\n")


def load(path):
    path = Path(path)
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", lineno, path) from None
            if not isinstance(rec, dict):
                raise ParseError("record is not an object", lineno, path)
            out.append(record_to_utterance(rec, lineno, path))
    return out


def save_corpus(corpus: dict, out_dir):
    out_dir = Path(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for split in SPLITS:
        paths[split] = out_dir / f"{split}.jsonl"
        save(corpus.get(split, []), paths[split])
    return paths


def load_corpus(in_dir) -> dict:
    in_dir = Path(in_dir)
    return {split: load(in_dir / f"{split}.jsonl") for split in SPLITS}
