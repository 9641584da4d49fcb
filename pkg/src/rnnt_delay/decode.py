"""Greedy transducer decoding and word error rate."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .data import BOUNDARY_ID, split_words, word_end_times
from .exceptions import EmptyReference

DEFAULT_MAX_SYMBOLS = 10


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple
    emit_frames: tuple
    boundary_id: int = BOUNDARY_ID

    @property
    def words(self):
        return split_words(self.tokens, self.boundary_id)

    @property
    def word_times(self):
        return word_end_times(self.tokens, self.emit_frames, self.boundary_id)


class TableSource:
    """Decoding source backed by a fixed (T, S, V) log-prob table.

    The state is the number of tokens emitted so far, clipped to ``S - 1``,
    so a (T, 1, V) table gives a state-independent per-frame distribution.
    """

    def __init__(self, table):
        self.table = np.asarray(table, dtype=np.float64)
        if self.table.ndim == 2:
            self.table = self.table[:, None, :]

    @property
    def num_frames(self):
        return self.table.shape[0]

    def start(self):
        return 0

    def advance(self, state, token):
        return state + 1

    def logprobs(self, t, state):
        return self.table[t, min(state, self.table.shape[1] - 1)]


def greedy_decode(source, max_symbols_per_frame=DEFAULT_MAX_SYMBOLS, blank_id=0,
                  boundary_id=BOUNDARY_ID) -> Hypothesis:
    """Frame-synchronous argmax decoding.

    ``source`` provides ``num_frames``, ``start()``, ``advance(state, token)``
    and ``logprobs(t, state)``.
    """
    if max_symbols_per_frame < 1:
        raise ValueError("max_symbols_per_frame must be >= 1")
    tokens, frames = [], []
    state = source.start()
    for t in range(source.num_frames):
        for _ in range(max_symbols_per_frame):
            k = int(np.argmax(source.logprobs(t, state)))
            if k == blank_id:
                break
            tokens.append(k)
            frames.append(t)
            state = source.advance(state, k)
    return Hypothesis(tuple(tokens), tuple(frames), boundary_id)


def edit_alignment(hyp, ref):
    """Minimum-edit alignment between two sequences.

    Returns ``(distance, pairs)`` where ``pairs`` lists ``(i_hyp, i_ref)`` for
    every position matched as correct.
    """
    n, m = len(hyp), len(ref)
    d = np.zeros((n + 1, m + 1), dtype=np.int64)
    d[:, 0] = np.arange(n + 1)
    d[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            sub = d[i - 1, j - 1] + (hyp[i - 1] != ref[j - 1])
            d[i, j] = min(sub, d[i - 1, j] + 1, d[i, j - 1] + 1)
    pairs = []
    i, j = n, m
    while i > 0 and j > 0:
        if hyp[i - 1] == ref[j - 1] and d[i, j] == d[i - 1, j - 1]:
            pairs.append((i - 1, j - 1))
            i, j = i - 1, j - 1
        elif d[i, j] == d[i - 1, j - 1] + 1:
            i, j = i - 1, j - 1
        elif d[i, j] == d[i - 1, j] + 1:
            i -= 1
        else:
            j -= 1
    pairs.reverse()
    return int(d[n, m]), pairs


def _as_words(x):
    return x.split() if isinstance(x, str) else list(x)


def word_errors(hyp, ref) -> int:
    return edit_alignment(_as_words(hyp), _as_words(ref))[0]


def wer(hyp, ref) -> Fraction:
    """Levenshtein distance over words divided by the reference length.

    Strings are split on whitespace; sequences are used as word lists.
    """
    hyp, ref = _as_words(hyp), _as_words(ref)
    if not ref:
        raise EmptyReference("reference has no words")
    return Fraction(edit_alignment(hyp, ref)[0], len(ref))
