"""Streaming unit generation core: upsampling, CTC loss, greedy decoding.

Discrete speech units live in [1, K]; index 0 is the blank. The loss is the
standard blank-interleaved forward algorithm in log space; decoding is
per-frame argmax followed by collapsing repeats and dropping blanks. The
unit sequence itself is the terminal artifact here (a vocoder would turn it
into waveform, which is out of scope).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import groupby

import numpy as np

from .errors import ParameterError, ShapeError
from .numerics import as_matrix

BLANK = 0

__all__ = ["BLANK", "UnitSequence", "FramePosteriors", "upsample", "ctc_loss",
           "greedy_decode", "collapse_units", "min_frames"]


@dataclass(frozen=True)
class UnitSequence:
    """Discrete units in [1, num_units]; blanks never appear here."""

    units: tuple[int, ...]
    num_units: int

    def __post_init__(self):
        if self.num_units < 1:
            raise ParameterError(f"num_units must be >= 1, got {self.num_units}")
        for u in self.units:
            if not (1 <= u <= self.num_units):
                raise ParameterError(f"unit {u} outside [1, {self.num_units}]")

    def __len__(self) -> int:
        return len(self.units)


@dataclass(frozen=True)
class FramePosteriors:
    """Per-frame log probabilities over blank + K units, shape (T, K+1)."""

    logprobs: np.ndarray

    def __post_init__(self):
        lp = np.asarray(self.logprobs, dtype=np.float64)
        object.__setattr__(self, "logprobs", lp)
        if lp.ndim != 2 or lp.shape[1] < 2:
            raise ShapeError(f"logprobs must be (T, K+1) with K >= 1, got {lp.shape}")
        if np.any(np.isnan(lp)) or np.any(lp == np.inf):
            raise ParameterError("logprobs must be finite or -inf")
        row_mass = np.logaddexp.reduce(lp, axis=1)
        if lp.shape[0] and np.max(np.abs(row_mass)) > 1e-9:
            raise ParameterError("each logprob row must normalize to 1")

    @property
    def frames(self) -> int:
        return self.logprobs.shape[0]

    @property
    def num_units(self) -> int:
        return self.logprobs.shape[1] - 1


def frame_posteriors_from_probs(probs) -> FramePosteriors:
    """Convenience constructor from plain probabilities."""
    p = as_matrix(probs, "probs")
    with np.errstate(divide="ignore"):
        return FramePosteriors(logprobs=np.log(p))


def upsample(hidden, factor: int) -> np.ndarray:
    """Repeat each row `factor` times, order preserved."""
    h = as_matrix(hidden, "hidden")
    if factor < 1:
        raise ParameterError(f"factor must be >= 1, got {factor}")
    return np.repeat(h, factor, axis=0)


def min_frames(target: UnitSequence) -> int:
    """Fewest frames that can emit the target: its length plus one blank
    between each adjacent repeat."""
    repeats = sum(1 for a, b in zip(target.units, target.units[1:]) if a == b)
    return len(target) + repeats


def ctc_loss(post: FramePosteriors, target: UnitSequence) -> float:
    """-log P(target | posteriors) by the blank-interleaved forward pass.

    Returns math.inf when no alignment of the given length can emit the
    target (the explicit infeasible result, never an exception).
    """
    if target.num_units != post.num_units:
        raise ParameterError(
            f"unit vocab mismatch: target {target.num_units}, posteriors {post.num_units}"
        )
    lp = post.logprobs
    T = post.frames
    if T == 0:
        return 0.0 if len(target) == 0 else math.inf
    if len(target) == 0:
        return float(-lp[:, BLANK].sum())
    ext = [BLANK]
    for u in target.units:
        ext.extend((u, BLANK))
    n = len(ext)
    alpha = np.full(n, -np.inf)
    alpha[0] = lp[0, BLANK]
    alpha[1] = lp[0, ext[1]]
    for t in range(1, T):
        prev = alpha
        alpha = np.full(n, -np.inf)
        for i in range(n):
            a = prev[i]
            if i >= 1:
                a = np.logaddexp(a, prev[i - 1])
            if i >= 2 and ext[i] != BLANK and ext[i] != ext[i - 2]:
                a = np.logaddexp(a, prev[i - 2])
            alpha[i] = a + lp[t, ext[i]]
    logp = np.logaddexp(alpha[-1], alpha[-2])
    if logp == -np.inf:
        return math.inf
    return float(-logp)


def collapse_units(raw, num_units: int) -> UnitSequence:
    """Merge adjacent duplicates, then drop blanks.

    Repeats separated by a blank survive, matching CTC semantics.
    """
    for r in raw:
        if not (BLANK <= r <= num_units):
            raise ParameterError(f"index {r} outside [0, {num_units}]")
    merged = [k for k, _ in groupby(raw)]
    return UnitSequence(units=tuple(u for u in merged if u != BLANK), num_units=num_units)


def greedy_decode(post: FramePosteriors) -> UnitSequence:
    """Per-frame argmax, collapsed; argmax ties go to the lower index."""
    ids = post.logprobs.argmax(axis=1) if post.frames else np.empty(0, dtype=int)
    return collapse_units([int(i) for i in ids], post.num_units)
