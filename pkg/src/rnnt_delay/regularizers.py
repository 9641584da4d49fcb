"""Delay-constraining training objectives built on the lattice loss.

* constrained alignment masks word-boundary emissions later than
  ``ref_time + sigma``;
* FastEmit scales label-transition gradients by ``1 + lambda``;
* self-alignment adds the likelihood of emitting each token one frame
  earlier than the model's current Viterbi alignment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .align import left_shift
from .exceptions import AllPathsMasked
from .lattice import AlignmentPath, JointLattice, LossResult, _masked_nll, nll_loss

UNBOUNDED = math.inf


@dataclass(frozen=True)
class ConstrainedConfig:
    sigma: float
    boundary_token: int
    ref_times: tuple

    def __post_init__(self):
        sigma = UNBOUNDED if self.sigma is None else self.sigma
        if sigma != UNBOUNDED:
            if sigma < 0 or int(sigma) != sigma:
                raise ValueError(f"sigma must be a non-negative integer, got {sigma!r}")
            sigma = int(sigma)
        ref = tuple(int(r) for r in self.ref_times)
        if any(b < a for a, b in zip(ref, ref[1:])):
            raise ValueError("ref_times must be non-decreasing")
        if any(r < 0 for r in ref):
            raise ValueError("ref_times must be non-negative")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "ref_times", ref)


@dataclass(frozen=True)
class FastEmitConfig:
    lambda_fe: float

    def __post_init__(self):
        if not self.lambda_fe >= 0:
            raise ValueError("lambda_fe must be >= 0")


@dataclass(frozen=True)
class SelfAlignConfig:
    lambda_sa: float

    def __post_init__(self):
        if not self.lambda_sa >= 0:
            raise ValueError("lambda_sa must be >= 0")


def constraint_mask(lattice: JointLattice, cfg: ConstrainedConfig) -> np.ndarray:
    """Boolean (T, U) table: True where emitting label ``u+1`` at frame t is allowed."""
    T, U = lattice.T, lattice.U
    if len(cfg.ref_times) != U:
        raise ValueError(f"ref_times has {len(cfg.ref_times)} entries for {U} labels")
    allowed = np.ones((T, U), dtype=bool)
    if cfg.sigma == UNBOUNDED:
        return allowed
    frames = np.arange(T)[:, None]
    limit = np.asarray(cfg.ref_times, dtype=np.int64)[None, :] + cfg.sigma
    boundary = (lattice.labels == cfg.boundary_token)[None, :]
    return ~boundary | (frames < limit)


def constrained_loss(lattice: JointLattice, cfg: ConstrainedConfig) -> LossResult:
    emit = np.where(constraint_mask(lattice, cfg), lattice.emit_logp(), -np.inf)
    return _masked_nll(lattice, emit, error=AllPathsMasked)


def fastemit_loss(lattice: JointLattice, cfg: FastEmitConfig) -> LossResult:
    """Reported loss is the plain NLL; only label gradients are boosted."""
    base = nll_loss(lattice)
    if cfg.lambda_fe == 0:
        return base
    grad = base.grad
    if lattice.U:
        idx = (slice(None), np.arange(lattice.U), lattice.labels)
        grad[idx] *= 1.0 + cfg.lambda_fe
    return LossResult(base.loss, grad)


def selfalign_loss(lattice: JointLattice, cfg: SelfAlignConfig,
                   viterbi: AlignmentPath) -> LossResult:
    """NLL minus ``lambda_sa`` times the left-shifted emission log-likelihoods.

    ``viterbi`` is a constant here; no gradient flows through its selection.
    """
    if viterbi.num_labels != lattice.U:
        raise ValueError("viterbi path does not match the lattice label count")
    base = nll_loss(lattice)
    if cfg.lambda_sa == 0:
        return base
    loss = base.loss
    grad = base.grad
    for u, t in left_shift(viterbi):
        v = lattice.labels[u - 1]
        loss -= cfg.lambda_sa * lattice.logp[t, u - 1, v]
        grad[t, u - 1, v] -= cfg.lambda_sa
    return LossResult(float(loss), grad)
