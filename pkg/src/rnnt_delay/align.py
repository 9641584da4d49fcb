"""Viterbi forced alignment over a transducer lattice."""

import numpy as np

from . import _kernels
from .exceptions import ZeroProbabilityTarget
from .lattice import AlignmentPath, JointLattice


def viterbi_with_score(lattice: JointLattice):
    score, moves = _kernels.viterbi(lattice.blank_logp(), lattice.emit_logp())
    if score == -np.inf:
        raise ZeroProbabilityTarget("no alignment with positive probability")
    return AlignmentPath(tuple(moves.tolist())), float(score)


def viterbi(lattice: JointLattice) -> AlignmentPath:
    """Most probable alignment; equal scores resolve to the earlier label emission."""
    return viterbi_with_score(lattice)[0]


def left_shift(path: AlignmentPath):
    """``(u, frame - 1)`` for every 1-based token ``u`` not already at frame 0."""
    return [(u, t - 1) for u, t in enumerate(path.emit_frames, start=1) if t >= 1]
