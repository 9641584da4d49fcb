from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rnnt_delay.decode import TableSource, edit_alignment, greedy_decode, wer, word_errors
from rnnt_delay.exceptions import EmptyReference
from rnnt_delay.model import TransducerSession


def table(T, V, hot=None):
    """(T, V) log-probs where blank wins except at frames listed in ``hot``."""
    p = np.full((T, V), 0.1 / (V - 1))
    p[:, 0] = 0.9
    for t, k in (hot or {}).items():
        p[t] = 0.1 / (V - 1)
        p[t, k] = 0.9
    return np.log(p)


def test_all_blank_gives_nothing():
    h = greedy_decode(TableSource(table(6, 4)))
    assert h.tokens == () and h.emit_frames == ()


def test_single_label_at_frame_one():
    # state 0 emits label 3 at frame 1; after one token the blank wins again
    t = np.stack([table(3, 4, {1: 3}), table(3, 4)], axis=1)
    h = greedy_decode(TableSource(t))
    assert h.tokens == (3,) and h.emit_frames == (1,)


def test_symbol_cap_forces_frame_advance():
    h = greedy_decode(TableSource(table(3, 4, {0: 2, 1: 2, 2: 2})), max_symbols_per_frame=4)
    assert h.tokens == (2,) * 12
    assert h.emit_frames == (0,) * 4 + (1,) * 4 + (2,) * 4
    with pytest.raises(ValueError):
        greedy_decode(TableSource(table(3, 4)), max_symbols_per_frame=0)


@given(st.integers(1, 8), st.integers(2, 6), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_decode_invariants(T, V, cap, seed):
    rng = np.random.default_rng(seed)
    h = greedy_decode(TableSource(rng.normal(size=(T, 5, V))), max_symbols_per_frame=cap)
    assert len(h.tokens) <= cap * T
    assert 0 not in h.tokens
    assert list(h.emit_frames) == sorted(h.emit_frames)


def test_trained_fixture_decodes_exactly(easy_model):
    params, fixture = easy_model
    for utt in fixture:
        h = greedy_decode(TransducerSession(params, utt.features))
        assert h.tokens == tuple(utt.labels.tolist())


def test_hypothesis_word_times():
    t = np.stack([table(5, 4, {1: 2}), table(5, 4, {3: 1}), table(5, 4)], axis=1)
    h = greedy_decode(TableSource(t))
    assert h.tokens == (2, 1)
    assert h.words == [(2,)]
    assert list(h.word_times) == [3]


@pytest.mark.parametrize("hyp,ref,expected", [
    ("a b c", "a b c", Fraction(0)),
    ("a x c", "a b c", Fraction(1, 3)),
    ("a b", "a b c", Fraction(1, 3)),
    ("a b c d", "a b c", Fraction(1, 3)),
    ("", "a b", Fraction(1)),
])
def test_wer_examples(hyp, ref, expected):
    assert wer(hyp, ref) == expected


def test_wer_empty_reference():
    with pytest.raises(EmptyReference):
        wer("a", "")


words = st.lists(st.sampled_from("abcd"), max_size=7)


@given(words, words.filter(bool))
def test_wer_bounds(hyp, ref):
    w = wer(hyp, ref)
    assert w >= 0
    assert w <= max(1, Fraction(len(hyp), len(ref)))
    assert wer(ref, ref) == 0


@given(words, words)
def test_edit_alignment_pairs_are_matches(hyp, ref):
    d, pairs = edit_alignment(hyp, ref)
    assert d == word_errors(hyp, ref)
    assert all(hyp[i] == ref[j] for i, j in pairs)
    assert [i for i, _ in pairs] == sorted({i for i, _ in pairs})
    assert [j for _, j in pairs] == sorted({j for _, j in pairs})
    assert d >= max(len(hyp), len(ref)) - len(pairs)
