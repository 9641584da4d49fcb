"""Compiled dynamic-programming kernels over the (T+1) x (U+1) node grid.

All kernels take the two transition tables gathered from a lattice:

    blank[t, u]  log Pr(blank | t, u),   shape (T, U+1)
    emit[t, u]   log Pr(y_{u+1} | t, u), shape (T, U)

Node (t, u) means t frames consumed and u labels emitted.  A blank moves
(t, u) -> (t+1, u); a label moves (t, u) -> (t, u+1) and needs t < T.
"""

import math

import numpy as np
from numba import njit

NEG_INF = -np.inf


@njit(cache=True, nogil=True)
def logaddexp(a, b):
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@njit(cache=True, nogil=True)
def forward(blank, emit):
    T, U1 = blank.shape
    alpha = np.full((T + 1, U1), -math.inf)
    alpha[0, 0] = 0.0
    for t in range(T + 1):
        for u in range(U1):
            if t == 0 and u == 0:
                continue
            acc = -math.inf
            if t > 0:
                acc = alpha[t - 1, u] + blank[t - 1, u]
            if u > 0 and t < T:
                acc = logaddexp(acc, alpha[t, u - 1] + emit[t, u - 1])
            alpha[t, u] = acc
    return alpha


@njit(cache=True, nogil=True)
def backward(blank, emit):
    T, U1 = blank.shape
    U = U1 - 1
    beta = np.full((T + 1, U1), -math.inf)
    beta[T, U] = 0.0
    for t in range(T - 1, -1, -1):
        for u in range(U, -1, -1):
            acc = blank[t, u] + beta[t + 1, u]
            if u < U:
                acc = logaddexp(acc, emit[t, u] + beta[t, u + 1])
            beta[t, u] = acc
    return beta


@njit(cache=True, nogil=True)
def viterbi(blank, emit):
    """Best path score and move sequence (0 = blank, 1 = label).

    Ties go to the earlier emission.  In the backtrace that means taking the
    blank predecessor: reaching (t, u) by a blank puts label u at a frame
    before t, reaching it by a label puts it exactly at t.
    """
    T, U1 = blank.shape
    score = np.full((T + 1, U1), -math.inf)
    from_label = np.zeros((T + 1, U1), dtype=np.bool_)
    score[0, 0] = 0.0
    for t in range(T + 1):
        for u in range(U1):
            if t == 0 and u == 0:
                continue
            best = -math.inf
            via_label = False
            if t > 0:
                best = score[t - 1, u] + blank[t - 1, u]
            if u > 0 and t < T:
                cand = score[t, u - 1] + emit[t, u - 1]
                if cand > best:
                    best = cand
                    via_label = True
            score[t, u] = best
            from_label[t, u] = via_label

    moves = np.zeros(T + U1 - 1, dtype=np.int8)
    t = T
    u = U1 - 1
    k = moves.shape[0] - 1
    while k >= 0:
        if from_label[t, u]:
            moves[k] = 1
            u -= 1
        else:
            moves[k] = 0
            t -= 1
        k -= 1
    return score[T, U1 - 1], moves
