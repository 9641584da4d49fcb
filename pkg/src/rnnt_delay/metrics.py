"""Word alignment delay metrics and delay/WER reports."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .decode import DEFAULT_MAX_SYMBOLS, edit_alignment, greedy_decode
from .exceptions import EmptyInput, ShapeMismatch

DEFAULT_FRAME_MS = 30.0


def _delays(pred_times, ref_times):
    if len(pred_times) != len(ref_times):
        raise ShapeMismatch(
            f"{len(pred_times)} predicted utterances vs {len(ref_times)} reference")
    chunks = []
    for k, (p, r) in enumerate(zip(pred_times, ref_times)):
        p = np.asarray(p, dtype=np.float64).reshape(-1)
        r = np.asarray(r, dtype=np.float64).reshape(-1)
        if p.shape != r.shape:
            raise ShapeMismatch(f"utterance {k}: {p.size} predicted words vs {r.size} reference")
        chunks.append(p - r)
    d = np.concatenate(chunks) if chunks else np.zeros(0)
    if d.size == 0:
        raise EmptyInput("no words to measure")
    return d


def mean_delay(pred_times, ref_times, frame_ms=DEFAULT_FRAME_MS) -> float:
    """Average of predicted minus reference word time, in milliseconds."""
    d = _delays(pred_times, ref_times)
    return float(d.sum() / d.size * frame_ms)


def rms_delay(pred_times, ref_times, frame_ms=DEFAULT_FRAME_MS) -> float:
    d = _delays(pred_times, ref_times)
    return float(math.sqrt((d * d).sum() / d.size) * frame_ms)


@dataclass
class UtteranceDelays:
    id: str
    delays: list
    errors: int
    ref_words: int


@dataclass
class DelayReport:
    mean_delay_ms: float
    rms_delay_ms: float
    wer: float
    num_utterances: int
    num_words: int
    matched_words: int
    frame_ms: float = DEFAULT_FRAME_MS
    per_utterance: list = field(default_factory=list, repr=False)

    @property
    def matched_word_fraction(self):
        return self.matched_words / self.num_words if self.num_words else 0.0

    @property
    def mean_delay_frames(self):
        return self.mean_delay_ms / self.frame_ms


def matched_word_delays(hyp_words, hyp_times, ref_words, ref_times):
    """Edit count and delays (frames) over words aligned as correct."""
    errors, pairs = edit_alignment(list(hyp_words), list(ref_words))
    delays = [int(hyp_times[i]) - int(ref_times[j]) for i, j in pairs]
    return errors, delays


def report_from_utterances(records, frame_ms=DEFAULT_FRAME_MS) -> DelayReport:
    """Aggregate per-utterance delays with a single division at the end."""
    errors = sum(r.errors for r in records)
    ref_words = sum(r.ref_words for r in records)
    delays = np.asarray([d for r in records for d in r.delays], dtype=np.float64)
    if delays.size:
        mean = float(delays.sum() / delays.size * frame_ms)
        rms = float(math.sqrt((delays * delays).sum() / delays.size) * frame_ms)
    else:
        mean = rms = float("nan")
    return DelayReport(
        mean_delay_ms=mean,
        rms_delay_ms=rms,
        wer=errors / ref_words if ref_words else float("nan"),
        num_utterances=len(records),
        num_words=ref_words,
        matched_words=int(delays.size),
        frame_ms=frame_ms,
        per_utterance=list(records),
    )


def evaluate(params, utterances, frame_ms=DEFAULT_FRAME_MS,
             max_symbols_per_frame=DEFAULT_MAX_SYMBOLS, boundary_id=None) -> DelayReport:
    """Greedy-decode each utterance and report WER plus matched-word delays."""
    from .model import TransducerSession

    records = []
    for utt in utterances:
        bid = utt.boundary_id if boundary_id is None else boundary_id
        hyp = greedy_decode(TransducerSession(params, utt.features), max_symbols_per_frame,
                            blank_id=params.blank_id, boundary_id=bid)
        ref_words = utt.words
        errors, delays = matched_word_delays(hyp.words, hyp.word_times,
                                             ref_words, utt.word_times)
        records.append(UtteranceDelays(utt.id, delays, errors, len(ref_words)))
    return report_from_utterances(records, frame_ms)
