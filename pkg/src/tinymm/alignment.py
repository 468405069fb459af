"""Cross-modality alignment loss between speech tokens and their transcript.

The pairwise distance is the negative log softmax (over transcript tokens)
of scaled inner products, so each speech token treats its matched transcript
token as the correct class. Variable lengths are handled by dynamic time
warping: the standard three-predecessor recurrence accumulates the minimum
total distance over monotone alignment paths, and the regularizer is that
total normalized by the combined length. The gradient treats the hard-min
path as fixed (the usual subgradient along the argmin path) and is exact
away from path ties.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .numerics import as_matrix, log_softmax_row, softmax_row

__all__ = [
    "AlignConfig",
    "AlignmentCost",
    "dist_matrix",
    "dtw_accumulate",
    "alignment_loss",
    "alignment_grad",
    "total_loss",
]


@dataclass(frozen=True)
class AlignConfig:
    tau: float = 1.0   # softmax temperature on inner products
    lam: float = 0.1   # weight of the regularizer inside the total loss

    def __post_init__(self):
        if self.tau <= 0:
            raise ParameterError(f"tau must be positive, got {self.tau}")
        if self.lam < 0:
            raise ParameterError(f"lam must be >= 0, got {self.lam}")


@dataclass
class AlignmentCost:
    """dist, its DTW accumulation, and the backtracked optimal path.

    path uses 0-based (speech, transcript) index pairs from (0, 0) to
    (L-1, S-1); steps only move down, right, or diagonally.
    """

    dist: np.ndarray
    accum: np.ndarray
    path: list[tuple[int, int]]

    @property
    def total(self) -> float:
        return float(self.accum[-1, -1])


def dist_matrix(speech, transcript, tau: float = 1.0) -> np.ndarray:
    """(L x S) matrix of -log softmax_s(speech_l . transcript_s / tau).

    Entries are non-negative; each row's exp(-dist) sums to 1.
    """
    x = as_matrix(speech, "speech")
    y = as_matrix(transcript, "transcript")
    if tau <= 0:
        raise ParameterError(f"tau must be positive, got {tau}")
    if x.shape[1] != y.shape[1]:
        raise ShapeError(f"dim mismatch: speech {x.shape}, transcript {y.shape}")
    if x.shape[0] < 1 or y.shape[0] < 1:
        raise ParameterError("need at least one token on each side")
    return -log_softmax_row(x @ y.T, tau)


def dtw_accumulate(dist) -> AlignmentCost:
    """Accumulate dist with the three-predecessor minimum and backtrack.

    First row and column have a single valid predecessor and simply
    accumulate. Backtracking resolves exact ties in the order diagonal,
    then up (previous speech row), then left (previous transcript column).
    """
    d = as_matrix(dist, "dist")
    L, S = d.shape
    if L == 0 or S == 0:
        raise ParameterError("dist matrix must be non-empty")
    acc = np.empty_like(d)
    acc[0, :] = np.cumsum(d[0, :])
    acc[:, 0] = np.cumsum(d[:, 0])
    for l in range(1, L):
        row = acc[l]
        above = acc[l - 1]
        for s in range(1, S):
            row[s] = d[l, s] + min(above[s - 1], above[s], row[s - 1])
    path = [(L - 1, S - 1)]
    l, s = L - 1, S - 1
    while l > 0 or s > 0:
        if l == 0:
            s -= 1
        elif s == 0:
            l -= 1
        else:
            cands = (acc[l - 1, s - 1], acc[l - 1, s], acc[l, s - 1])
            best = cands.index(min(cands))
            if best == 0:
                l, s = l - 1, s - 1
            elif best == 1:
                l -= 1
            else:
                s -= 1
        path.append((l, s))
    path.reverse()
    return AlignmentCost(dist=d, accum=acc, path=path)


def alignment_loss(speech, transcript, cfg: AlignConfig = AlignConfig()) -> float:
    """Minimum alignment cost normalized by the combined length, >= 0."""
    d = dist_matrix(speech, transcript, cfg.tau)
    cost = dtw_accumulate(d)
    return cost.total / (d.shape[0] + d.shape[1])


def alignment_grad(
    speech, transcript, cfg: AlignConfig = AlignConfig()
) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradient of alignment_loss w.r.t. both embedding matrices.

    Each path entry (l, s) contributes the full softmax row l (every
    transcript token enters through the normalizer) minus the indicator at
    s; the result maps back through the inner products. Matches central
    finite differences away from path ties.
    """
    x = as_matrix(speech, "speech")
    y = as_matrix(transcript, "transcript")
    d = dist_matrix(x, y, cfg.tau)
    cost = dtw_accumulate(d)
    L, S = d.shape
    probs = softmax_row(x @ y.T, cfg.tau)
    g = np.zeros((L, S))
    for l, s in cost.path:
        g[l] += probs[l]
        g[l, s] -= 1.0
    scale = 1.0 / (cfg.tau * (L + S))
    return scale * (g @ y), scale * (g.T @ x)


def total_loss(ce: float, reg: float, lam: float) -> float:
    """Cross-entropy plus lam times the alignment regularizer."""
    if lam < 0:
        raise ParameterError(f"lam must be >= 0, got {lam}")
    if not (np.isfinite(ce) and np.isfinite(reg)):
        raise ParameterError("loss terms must be finite")
    return float(ce) + lam * float(reg)
