"""Transducer alignment lattice: forward-backward, NLL gradients, path oracle.

A :class:`JointLattice` holds ``logp[t, u, v]`` for frames ``t < T`` and label
positions ``u <= U``.  The node grid runs over ``t in [0, T]`` so that the total
probability is ``alpha[T, U]`` and every alignment ends with a blank out of
frame ``T - 1``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .exceptions import InstanceTooLarge, ShapeMismatch, ZeroProbabilityTarget

BLANK = 0
LABEL = 1

MAX_ENUMERATION = 24


@dataclass(frozen=True, eq=False)
class JointLattice:
    logp: np.ndarray
    labels: np.ndarray
    blank_id: int = 0

    def __post_init__(self):
        logp = np.asarray(self.logp, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if logp.ndim != 3:
            raise ShapeMismatch(f"logp must be 3-d (T, U+1, V), got shape {logp.shape}")
        T, U1, V = logp.shape
        if T < 1:
            raise ValueError("lattice needs at least one frame")
        if V < 2:
            raise ValueError("vocabulary must include blank and at least one label")
        if U1 != labels.shape[0] + 1:
            raise ShapeMismatch(
                f"logp has {U1} label positions but {labels.shape[0]} labels were given")
        if not 0 <= self.blank_id < V:
            raise ValueError(f"blank_id {self.blank_id} outside vocabulary of size {V}")
        if np.any((labels < 0) | (labels >= V)):
            raise ValueError("label id outside vocabulary")
        if np.any(labels == self.blank_id):
            raise ValueError("labels must not contain blank_id")
        if np.isnan(logp).any() or np.isposinf(logp).any():
            raise ValueError("logp must be finite or -inf")
        object.__setattr__(self, "logp", logp)
        object.__setattr__(self, "labels", labels)

    @property
    def T(self) -> int:
        return self.logp.shape[0]

    @property
    def U(self) -> int:
        return self.labels.shape[0]

    @property
    def V(self) -> int:
        return self.logp.shape[2]

    def blank_logp(self) -> np.ndarray:
        """(T, U+1) table of blank log-probabilities."""
        return np.ascontiguousarray(self.logp[:, :, self.blank_id])

    def emit_logp(self) -> np.ndarray:
        """(T, U) table of log Pr(y_{u+1} | t, u)."""
        U = self.U
        if U == 0:
            return np.zeros((self.T, 0))
        return np.ascontiguousarray(self.logp[:, np.arange(U), self.labels])

    def is_normalized(self, atol: float = 1e-6) -> bool:
        return bool(np.all(np.abs(logsumexp(self.logp, axis=-1)) < atol))

    def with_logp(self, logp) -> "JointLattice":
        return JointLattice(logp, self.labels, self.blank_id)


@dataclass(frozen=True)
class AlignmentPath:
    """Monotone lattice path as a move sequence of BLANK / LABEL."""

    moves: tuple

    def __post_init__(self):
        moves = tuple(int(m) for m in self.moves)
        if any(m not in (BLANK, LABEL) for m in moves):
            raise ValueError("moves must be BLANK (0) or LABEL (1)")
        object.__setattr__(self, "moves", moves)

    @property
    def num_frames(self) -> int:
        return self.moves.count(BLANK)

    @property
    def num_labels(self) -> int:
        return self.moves.count(LABEL)

    @property
    def emit_frames(self) -> tuple:
        frames = []
        t = 0
        for m in self.moves:
            if m == BLANK:
                t += 1
            else:
                frames.append(t)
        return tuple(frames)

    def log_prob(self, lattice: JointLattice) -> float:
        """Sum of transition log-probabilities along the path."""
        t = u = 0
        total = 0.0
        for m in self.moves:
            if m == BLANK:
                total += lattice.logp[t, u, lattice.blank_id]
                t += 1
            else:
                total += lattice.logp[t, u, lattice.labels[u]]
                u += 1
        return float(total)


@dataclass
class LossResult:
    loss: float
    grad: np.ndarray = field(repr=False)


def forward(lattice: JointLattice) -> np.ndarray:
    """Log forward variables ``alpha`` of shape (T+1, U+1)."""
    return _kernels.forward(lattice.blank_logp(), lattice.emit_logp())


def backward(lattice: JointLattice) -> np.ndarray:
    """Log backward variables ``beta`` of shape (T+1, U+1)."""
    return _kernels.backward(lattice.blank_logp(), lattice.emit_logp())


def total_log_prob(lattice: JointLattice) -> float:
    return float(forward(lattice)[lattice.T, lattice.U])


def transition_posteriors(blank, emit, alpha, beta, total):
    """Occupation probabilities of every blank and label transition."""
    with np.errstate(invalid="ignore"):
        post_blank = np.exp(alpha[:-1, :] + blank + beta[1:, :] - total)
        post_emit = np.exp(alpha[:-1, :-1] + emit + beta[:-1, 1:] - total)
    # -inf + -inf stays -inf; nan only arises from inf - inf which cannot occur
    # for a finite total, but guard anyway.
    post_blank = np.nan_to_num(post_blank, nan=0.0)
    post_emit = np.nan_to_num(post_emit, nan=0.0)
    return post_blank, post_emit


def scatter_grad(lattice: JointLattice, d_blank, d_emit) -> np.ndarray:
    """Place per-transition gradients into a tensor shaped like ``logp``."""
    grad = np.zeros_like(lattice.logp)
    grad[:, :, lattice.blank_id] = d_blank
    if lattice.U:
        grad[:, np.arange(lattice.U), lattice.labels] += d_emit
    return grad


def _masked_nll(lattice: JointLattice, emit: np.ndarray, error=ZeroProbabilityTarget):
    blank = lattice.blank_logp()
    alpha = _kernels.forward(blank, emit)
    total = alpha[lattice.T, lattice.U]
    if total == -np.inf:
        raise error("label sequence has zero probability under this lattice")
    beta = _kernels.backward(blank, emit)
    post_blank, post_emit = transition_posteriors(blank, emit, alpha, beta, total)
    return LossResult(float(-total), scatter_grad(lattice, -post_blank, -post_emit))


def nll_loss(lattice: JointLattice) -> LossResult:
    """Negative log-likelihood and its gradient w.r.t. every ``logp`` entry.

    Entries are treated as free parameters; the gradient is minus the
    posterior occupancy of the corresponding transition.
    """
    return _masked_nll(lattice, lattice.emit_logp())


def num_paths(T: int, U: int) -> int:
    """Number of alignments: the final move out of frame T-1 is always blank."""
    return comb(T + U - 1, U)


def enumerate_paths(lattice: JointLattice):
    """Every alignment with its exact log-probability (brute force)."""
    T, U = lattice.T, lattice.U
    if T + U > MAX_ENUMERATION:
        raise InstanceTooLarge(
            f"T + U = {T + U} exceeds enumeration guard {MAX_ENUMERATION}")
    out = []
    n = T + U - 1
    for label_slots in itertools.combinations(range(n), U):
        moves = [BLANK] * n
        for k in label_slots:
            moves[k] = LABEL
        path = AlignmentPath(tuple(moves) + (BLANK,))
        out.append((path, path.log_prob(lattice)))
    return out


def random_lattice(T, U, V, rng=None, blank_id=0, min_prob=0.0, labels=None):
    """Normalized lattice with random distributions at every node.

    With ``min_prob > 0`` every probability lies in
    ``[min_prob, 1 - (V - 1) * min_prob]``.
    """
    rng = np.random.default_rng(rng)
    if min_prob * V >= 1:
        raise ValueError("min_prob too large for vocabulary size")
    probs = rng.dirichlet(np.ones(V), size=(T, U + 1))
    probs = min_prob + (1.0 - V * min_prob) * probs
    if labels is None:
        choices = np.array([v for v in range(V) if v != blank_id])
        labels = rng.choice(choices, size=U)
    return JointLattice(np.log(probs), np.asarray(labels), blank_id)
