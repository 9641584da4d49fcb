import numpy as np
import pytest
from hypothesis import given, strategies as st

from rnnt_delay.data import (BOUNDARY_ID, CorpusSpec, generate, generate_utterance, load,
                             load_corpus, make_templates, save, save_corpus, split_words,
                             word_end_times)
from rnnt_delay.exceptions import InvalidSpec, ParseError

SMALL = dict(num_train=30, num_dev=5, num_test=5)


def test_same_seed_byte_identical(tmp_path):
    for d in ("a", "b"):
        save_corpus(generate(CorpusSpec(**SMALL)), tmp_path / d)
    for split in ("train", "dev", "test"):
        assert (tmp_path / "a" / f"{split}.jsonl").read_bytes() == \
               (tmp_path / "b" / f"{split}.jsonl").read_bytes()


def test_other_seed_differs():
    a = generate(CorpusSpec(**SMALL))["train"][0]
    b = generate(CorpusSpec(seed=1, **SMALL))["train"][0]
    assert not np.array_equal(a.features[:3], b.features[:3]) or a.labels.tolist() != b.labels.tolist()


def test_utterance_independent_of_corpus_size():
    big = generate(CorpusSpec(num_train=50, num_dev=0, num_test=0))["train"]
    assert generate_utterance(CorpusSpec(), "train", 37) == big[37]


def test_clean_corpus_is_frame_separable():
    spec = CorpusSpec(future_cue_prob=0.0, noise_std=0.0, **SMALL)
    class_t, _, _ = make_templates(spec)
    for utt in generate(spec)["train"]:
        starts = np.concatenate([[0], utt.token_end_frames[:-1] + 1])
        for tok, s, e in zip(utt.labels, starts, utt.token_end_frames):
            for t in range(s, e + 1):
                dist = ((class_t - utt.features[t]) ** 2).sum(axis=1)
                dist[0] = np.inf
                assert int(np.argmin(dist)) == tok


def test_fixed_segment_arithmetic():
    spec = CorpusSpec(min_segment=3, max_segment=3, min_words=1, max_words=1, max_word_len=1,
                      **SMALL)
    utt = generate(spec)["train"][0]
    assert len(utt.labels) == 2
    assert utt.token_end_frames.tolist() == [2, 5]


@pytest.mark.parametrize("kw,needle", [
    ({"min_segment": 0}, "d_min >= 1"),
    ({"max_segment": 1}, "max_segment"),
    ({"future_cue_prob": 1.5}, "future_cue_prob"),
    ({"noise_std": -1.0}, "noise_std"),
    ({"vocab_size": 3}, "vocab_size"),
    ({"cue_tokens": "nope"}, "cue_tokens"),
    ({"min_words": 0}, "min_words"),
])
def test_invalid_spec(kw, needle):
    with pytest.raises(InvalidSpec, match=needle):
        generate(CorpusSpec(**kw))


def test_unknown_spec_key():
    with pytest.raises(InvalidSpec, match="bogus"):
        CorpusSpec.from_dict({"bogus": 1})


def test_round_trip(tmp_path):
    corpus = generate(CorpusSpec(**SMALL))
    save_corpus(corpus, tmp_path)
    assert load_corpus(tmp_path) == corpus


def test_truncated_file(tmp_path):
    utts = generate(CorpusSpec(**SMALL))["train"][:3]
    path = tmp_path / "x.jsonl"
    save(utts, path)
    text = path.read_text()
    path.write_text(text[:len(text) - 40])
    with pytest.raises(ParseError) as err:
        load(path)
    assert err.value.lineno == 3
    assert ":3:" in str(err.value)


def test_bad_record(tmp_path):
    path = tmp_path / "x.jsonl"
    path.write_text('{"id": "a", "T": 2, "F": 1, "labels": [2], "token_end_frames": [1], '
                    '"features": [0.0]}\n')
    with pytest.raises(ParseError, match="T\\*F"):
        load(path)
    path.write_text('{"id": "a"}\n')
    with pytest.raises(ParseError, match="missing field"):
        load(path)


def test_empty_file(tmp_path):
    path = tmp_path / "e.jsonl"
    path.write_text("")
    assert load(path) == []


def test_splits_disjoint():
    corpus = generate(CorpusSpec(**SMALL))
    ids = [u.id for split in corpus.values() for u in split]
    assert len(ids) == len(set(ids))
    feats = {u.features.tobytes() for split in corpus.values() for u in split}
    assert len(feats) == len(ids)


@given(st.integers(0, 1000), st.integers(1, 4), st.integers(0, 3))
def test_utterance_invariants(index, d_min, extra):
    spec = CorpusSpec(min_segment=d_min, max_segment=d_min + extra, **SMALL)
    utt = generate_utterance(spec, "dev", index)
    ends = utt.token_end_frames
    assert np.all(np.diff(ends) > 0)
    assert ends[-1] <= utt.num_frames - 1
    assert len(utt.words) == int(np.sum(utt.labels == BOUNDARY_ID))
    assert utt.word_times.tolist() == ends[utt.labels == BOUNDARY_ID].tolist()
    assert BOUNDARY_ID == utt.labels[-1]
    assert 0 not in utt.labels


def test_word_helpers():
    assert split_words([2, 3, 1, 4, 1, 5]) == [(2, 3), (4,), (5,)]
    assert word_end_times([2, 3, 1, 4, 1, 5], [0, 1, 2, 5, 6, 9]).tolist() == [2, 6, 9]
    assert split_words([]) == []
