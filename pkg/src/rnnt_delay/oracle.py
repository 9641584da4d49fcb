"""Brute-force and finite-difference checks of the lattice code.

Every suite compares a fast implementation against an independent slow one
on small random instances and reports the worst error seen.
"""

from __future__ import annotations

import contextlib
import math
import time
import types
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import lattice as lat
from . import regularizers as reg
from .align import viterbi, viterbi_with_score
from .exceptions import AllPathsMasked
from .lattice import JointLattice, enumerate_paths, nll_loss, random_lattice
from .model import forward_batch, backward_batch, init_params

FAULTS = ("backward_sign",)


@dataclass
class SuiteResult:
    name: str
    max_error: float
    tolerance: float
    cases: int
    seconds: float = 0.0
    failures: int = 0
    error: str = ""

    @property
    def passed(self):
        return self.failures == 0 and self.max_error < self.tolerance

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        text = (f"{self.name:<16} {status}  max_err={self.max_error:.3e}  "
                f"tol={self.tolerance:.0e}  cases={self.cases}  ({self.seconds:.2f}s)")
        return f"{text}  {self.error}" if self.error else text


@contextlib.contextmanager
def inject_fault(name):
    """Test-only hook: temporarily break the library so a suite must fail."""
    if name not in FAULTS:
        raise ValueError(f"unknown fault {name!r}; expected one of {FAULTS}")
    real = lat._kernels
    lat._kernels = types.SimpleNamespace(
        forward=real.forward, viterbi=real.viterbi,
        backward=lambda blank, emit: -real.backward(blank, emit))
    try:
        yield
    finally:
        lat._kernels = real


def _err(a, b):
    """Absolute difference that treats matching infinities as equal and NaN as failure."""
    if a == b:
        return 0.0
    d = abs(a - b)
    return math.inf if math.isnan(d) else d


def _rel_err(analytic, numeric, floor=1e-6):
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(n))):
        return math.inf
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def _random_shape(rng, max_T=8, max_U=4, max_V=5, min_V=2):
    T = int(rng.integers(1, max_T + 1))
    U = int(rng.integers(0, max_U + 1))
    V = int(rng.integers(min_V, max_V + 1))
    return T, U, V


# --- path-sum suites ----------------------------------------------------------

def lattice_suite(n=200, seed=0):
    """Forward total vs enumeration, beta(0,0) vs alpha(T,U), and the cut identity."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        T, U, V = _random_shape(rng)
        L = random_lattice(T, U, V, rng)
        alpha = lat.forward(L)
        beta = lat.backward(L)
        total = alpha[T, U]
        oracle = logsumexp([lp for _, lp in enumerate_paths(L)])
        worst = max(worst, _err(total, oracle), _err(beta[0, 0], total))
        blank = L.blank_logp()
        for t in range(T):
            cut = logsumexp(alpha[t, :] + blank[t, :] + beta[t + 1, :])
            worst = max(worst, _err(cut, total))
    return SuiteResult("lattice", worst, 1e-8, n)


def posterior_suite(n=100, seed=1):
    """Minus the NLL gradient sums to T over blanks and U over labels."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        T, U, V = _random_shape(rng)
        L = random_lattice(T, U, V, rng)
        g = nll_loss(L).grad
        blank_mass = -g[:, :, L.blank_id].sum()
        worst = max(worst, _err(blank_mass, T), _err(-g.sum() - blank_mass, U))
    return SuiteResult("posterior_mass", worst, 1e-6, n)


def _random_constraint(rng, L, boundary):
    T, U = L.T, L.U
    ref = np.sort(rng.integers(0, T, size=U))
    sigma = reg.UNBOUNDED if rng.random() < 0.1 else int(rng.integers(0, T + 1))
    return reg.ConstrainedConfig(sigma, boundary, tuple(ref.tolist()))


def _random_boundary_lattice(rng, boundary=1):
    T, U, V = _random_shape(rng, min_V=3)
    labels = rng.integers(2, V, size=U)
    labels[rng.random(U) < 0.4] = boundary
    return random_lattice(T, U, V, rng, labels=labels)


def constrained_suite(n=300, seed=2, boundary=1):
    """Masked totals vs indicator-filtered enumeration; AllPathsMasked iff nothing survives."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    failures = 0
    for _ in range(n):
        L = _random_boundary_lattice(rng, boundary)
        cfg = _random_constraint(rng, L, boundary)
        kept = []
        for path, lp in enumerate_paths(L):
            frames = path.emit_frames
            if all(L.labels[u] != boundary or frames[u] < cfg.ref_times[u] + cfg.sigma
                   for u in range(L.U)):
                kept.append(lp)
        try:
            loss = reg.constrained_loss(L, cfg).loss
        except AllPathsMasked:
            failures += bool(kept)
            continue
        if not kept:
            failures += 1
            continue
        worst = max(worst, _err(-loss, logsumexp(kept)))
    return SuiteResult("constrained", worst, 1e-8, n, failures=failures)


def tie_lattice():
    """T=2, U=1 lattice where both alignments score exactly the same."""
    logp = np.full((2, 2, 2), np.log(0.5))
    return JointLattice(logp, np.array([1]))


def viterbi_suite(n=200, seed=3):
    """Viterbi score vs enumeration max, plus the earliest-emission tie rule."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        T, U, V = _random_shape(rng)
        L = random_lattice(T, U, V, rng)
        path, score = viterbi_with_score(L)
        best = max(lp for _, lp in enumerate_paths(L))
        worst = max(worst, _err(score, best), _err(path.log_prob(L), best))
    failures = int(viterbi(tie_lattice()).emit_frames != (0,))
    return SuiteResult("viterbi", worst, 1e-10, n + 1, failures=failures)


# --- gradient suites ----------------------------------------------------------

def fastemit_surrogate(L: JointLattice, logp, lambda_fe):
    """A scalar whose gradient is the FastEmit gradient at ``logp == L.logp``.

    The boost acts only on label entries, so it equals the NLL gradient of a
    copy whose blank entries are frozen at their base values, scaled by lambda.
    """
    frozen = np.array(logp, copy=True)
    frozen[:, :, L.blank_id] = L.logp[:, :, L.blank_id]
    return nll_loss(L.with_logp(logp)).loss + lambda_fe * nll_loss(L.with_logp(frozen)).loss


def _scheme_objectives(L, rng, boundary=1):
    """(name, analytic LossResult, scalar function of logp) for each scheme."""
    cfg_c = reg.ConstrainedConfig(reg.UNBOUNDED, boundary, tuple([0] * L.U))
    if L.U:
        ref = np.sort(rng.integers(0, L.T, size=L.U))
        # keep the masked set non-empty: each boundary may wait at least until its reference
        cfg_c = reg.ConstrainedConfig(int(rng.integers(1, L.T + 1)), boundary, tuple(ref.tolist()))
    fe = reg.FastEmitConfig(0.1)
    sa = reg.SelfAlignConfig(0.5)
    path = viterbi(L)
    return [
        ("nll", nll_loss(L), lambda x: nll_loss(L.with_logp(x)).loss),
        ("constrained", reg.constrained_loss(L, cfg_c),
         lambda x: reg.constrained_loss(L.with_logp(x), cfg_c).loss),
        ("fastemit", reg.fastemit_loss(L, fe), lambda x: fastemit_surrogate(L, x, fe.lambda_fe)),
        ("selfalign", reg.selfalign_loss(L, sa, path),
         lambda x: reg.selfalign_loss(L.with_logp(x), sa, path).loss),
    ]


def _central_diff(fn, x, h):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = fn(x)
        x[idx] = old - h
        fm = fn(x)
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def gradient_suite(n=15, seed=4, h=1e-5):
    """Lattice gradients of all four objectives vs central differences."""
    rng = np.random.default_rng(seed)
    worst = {}
    for _ in range(n):
        T = int(rng.integers(1, 6))
        U = int(rng.integers(0, 4))
        V = int(rng.integers(3, 6))
        labels = rng.integers(2, V, size=U)
        labels[rng.random(U) < 0.4] = 1
        L = random_lattice(T, U, V, rng, min_prob=0.05 / V * 2, labels=labels)
        for name, res, fn in _scheme_objectives(L, rng):
            numeric = _central_diff(fn, L.logp.copy(), h)
            worst[name] = max(worst.get(name, 0.0), _rel_err(res.grad, numeric))
    return SuiteResult("gradients", max(worst.values()), 1e-5, n * 4)


def _model_objective(params, feats, labels, scheme, rng):
    """Loss as a function of params and the analytic lattice gradient at ``params``."""
    (L,), cache = forward_batch(params, [feats], [labels])
    if scheme == "nll":
        res = nll_loss(L)
        return res, cache, lambda P: nll_loss(forward_batch(P, [feats], [labels])[0][0]).loss
    if scheme == "constrained":
        cfg = reg.ConstrainedConfig(2, 1, tuple(np.sort(rng.integers(0, L.T, L.U)).tolist()))
        return (reg.constrained_loss(L, cfg), cache,
                lambda P: reg.constrained_loss(forward_batch(P, [feats], [labels])[0][0], cfg).loss)
    if scheme == "fastemit":
        cfg = reg.FastEmitConfig(0.1)
        base = L.logp

        def fn(P):
            x = forward_batch(P, [feats], [labels])[0][0]
            frozen = x.logp.copy()
            frozen[:, :, x.blank_id] = base[:, :, x.blank_id]
            return nll_loss(x).loss + cfg.lambda_fe * nll_loss(x.with_logp(frozen)).loss
        return reg.fastemit_loss(L, cfg), cache, fn
    cfg = reg.SelfAlignConfig(0.5)
    path = viterbi(L)
    return (reg.selfalign_loss(L, cfg, path), cache,
            lambda P: reg.selfalign_loss(forward_batch(P, [feats], [labels])[0][0], cfg, path).loss)


def model_gradient_suite(seed=5, h=1e-6, F=3, H=4, V=5, T=6, U=3):
    """End-to-end parameter gradients of a tiny model, every scheme, vs central differences."""
    rng = np.random.default_rng(seed)
    params = init_params(F, H, H, V, seed=seed, scale=0.8)
    feats = rng.standard_normal((T, F))
    labels = np.array([2, 1, 3])[:U]
    worst = 0.0
    schemes = ("nll", "constrained", "fastemit", "selfalign")
    for scheme in schemes:
        res, cache, fn = _model_objective(params, feats, labels, scheme, rng)
        grads = backward_batch(params, cache, [res.grad])
        for name, w in params.weights.items():
            numeric = np.zeros_like(w)
            for idx in np.ndindex(w.shape):
                old = w[idx]
                w[idx] = old + h
                fp = fn(params)
                w[idx] = old - h
                fm = fn(params)
                w[idx] = old
                numeric[idx] = (fp - fm) / (2 * h)
            worst = max(worst, _rel_err(grads[name], numeric))
    return SuiteResult("model_gradients", worst, 1e-4, len(schemes))


def neutral_suite(n=50, seed=6):
    """sigma = inf, lambda_fe = 0 and lambda_sa = 0 reproduce the plain NLL."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        L = _random_boundary_lattice(rng)
        base = nll_loss(L)
        outs = [reg.constrained_loss(L, reg.ConstrainedConfig(None, 1, tuple([0] * L.U))),
                reg.fastemit_loss(L, reg.FastEmitConfig(0.0)),
                reg.selfalign_loss(L, reg.SelfAlignConfig(0.0), viterbi(L))]
        for r in outs:
            worst = max(worst, _err(r.loss, base.loss), float(np.max(np.abs(r.grad - base.grad))))
    return SuiteResult("neutral", worst, 1e-10, n * 3)


SUITES = {
    "lattice": lattice_suite,
    "posterior_mass": posterior_suite,
    "constrained": constrained_suite,
    "viterbi": viterbi_suite,
    "gradients": gradient_suite,
    "model_gradients": model_gradient_suite,
    "neutral": neutral_suite,
}


def run_all(names=None, echo=None):
    """Run the named suites (all by default); returns the list of results."""
    results = []
    for name in names or SUITES:
        t0 = time.perf_counter()
        try:
            res = SUITES[name]()
        except Exception as exc:  # a crashing suite is a failing suite
            res = SuiteResult(name, math.inf, 0.0, 0, failures=1,
                              error=f"{type(exc).__name__}: {exc}")
        res.seconds = time.perf_counter() - t0
        if echo is not None:
            echo(res.line())
        results.append(res)
    return results
