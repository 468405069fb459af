"""Brute-force reference implementations used to cross-check the fast paths.

These deliberately share no code with the implementations they verify:
matrix products by triple loop, DTW by exhaustive monotone-path enumeration,
CTC by summing over every raw alignment, top-k by argsort. They are shipped
(not test-only) because the selftest command runs them in the field.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "matmul_naive",
    "enumerate_monotone_paths",
    "dtw_min_cost_bruteforce",
    "ctc_loss_bruteforce",
    "topk_bruteforce",
]


def matmul_naive(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def enumerate_monotone_paths(L: int, S: int):
    """Every path from (0,0) to (L-1,S-1) stepping down, right, or diagonal."""
    paths = []

    def walk(l, s, acc):
        if l == L - 1 and s == S - 1:
            paths.append(acc)
            return
        if l + 1 < L:
            walk(l + 1, s, acc + [(l + 1, s)])
        if s + 1 < S:
            walk(l, s + 1, acc + [(l, s + 1)])
        if l + 1 < L and s + 1 < S:
            walk(l + 1, s + 1, acc + [(l + 1, s + 1)])

    walk(0, 0, [(0, 0)])
    return paths


def dtw_min_cost_bruteforce(dist) -> float:
    d = np.asarray(dist, dtype=np.float64)
    best = np.inf
    for path in enumerate_monotone_paths(*d.shape):
        cost = sum(d[l, s] for l, s in path)
        best = min(best, cost)
    return float(best)


def _collapse(raw, blank=0):
    out = []
    prev = None
    for r in raw:
        if r != prev:
            if r != blank:
                out.append(r)
            prev = r
    return tuple(out)


def ctc_loss_bruteforce(logprobs, target: tuple[int, ...]) -> float:
    """-log of the summed probability of every raw alignment that collapses
    to the target. Exponential in T; only for tiny instances."""
    lp = np.asarray(logprobs, dtype=np.float64)
    T, C = lp.shape
    total = 0.0
    stack = [((), 0.0)]
    for t in range(T):
        nxt = []
        for seq, logp in stack:
            for c in range(C):
                nxt.append((seq + (c,), logp + lp[t, c]))
        stack = nxt
    for seq, logp in stack:
        if _collapse(seq) == tuple(target):
            total += np.exp(logp)
    if total == 0.0:
        return float("inf")
    return float(-np.log(total))


def topk_bruteforce(scores, positions, k: int) -> set:
    """Positions of the k best scores, ties to the lower position."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], positions[i]))
    return {positions[i] for i in order[:k]}
