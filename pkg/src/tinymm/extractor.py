"""Attention-guided token retention: scoring and block-wise top-k pruning.

Non-text tokens are scored by how strongly the text-query tokens attend to
them (scaled dot-product softmax over the non-text key axis, averaged over
heads and query rows). At each block boundary of the host model only the
highest-scoring fraction survives, so the non-text token count decays
geometrically across blocks while text tokens are never dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, ParameterError, ShapeError
from .modality import TokenSequence
from .numerics import as_matrix, softmax_row

__all__ = [
    "ExtractorConfig",
    "BlockTrace",
    "PruneTrace",
    "relevance_scores",
    "retention_schedule",
    "block_input_lengths",
    "prune",
]


@dataclass(frozen=True)
class ExtractorConfig:
    """Block count and per-block keep ratio.

    blocks: the host model's layers are split into this many equal blocks,
    with one pruning step after the final layer of each block.
    keep_ratio: fraction of the current non-text tokens retained per step.
    """

    blocks: int
    keep_ratio: float
    min_keep: int = 1

    def __post_init__(self):
        if self.blocks < 1:
            raise ConfigError(f"blocks must be >= 1, got {self.blocks}")
        if not (0.0 < self.keep_ratio <= 1.0):
            raise ConfigError(f"keep_ratio must be in (0, 1], got {self.keep_ratio}")
        if self.min_keep < 1:
            raise ConfigError(f"min_keep must be >= 1, got {self.min_keep}")


@dataclass
class BlockTrace:
    """What one pruning step kept and why."""

    layer: int
    kept_pos: np.ndarray     # original positions of all survivors (text included)
    cand_pos: np.ndarray     # original positions of the scored non-text tokens
    scores: np.ndarray       # relevance per candidate, same order as cand_pos
    needle_overlap: Optional[int] = None

    def to_dict(self) -> dict:
        d = {
            "layer": self.layer,
            "kept_pos": [int(p) for p in self.kept_pos],
            "cand_pos": [int(p) for p in self.cand_pos],
            "scores": [float(s) for s in self.scores],
        }
        if self.needle_overlap is not None:
            d["needle_overlap"] = int(self.needle_overlap)
        return d


@dataclass
class PruneTrace:
    blocks: list[BlockTrace] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"blocks": [b.to_dict() for b in self.blocks]}


def relevance_scores(q_text, k_nontext, head_dim: int, heads: int) -> np.ndarray:
    """Per non-text token relevance to the text queries.

    For each head, softmax over the non-text key axis of Q K^T / sqrt(d),
    then the arithmetic mean over heads and over text query rows. The result
    has one entry per non-text token and always sums to 1.
    """
    q = as_matrix(q_text, "q_text")
    k = as_matrix(k_nontext, "k_nontext")
    if q.shape[0] < 1:
        raise ParameterError("relevance scoring needs at least one text query row")
    if k.shape[0] < 1:
        raise ParameterError("relevance scoring needs at least one non-text key row")
    if head_dim < 1 or heads < 1:
        raise ParameterError(f"head_dim and heads must be >= 1, got {head_dim}, {heads}")
    if q.shape[1] != head_dim * heads or k.shape[1] != head_dim * heads:
        raise ShapeError(
            f"expected width head_dim*heads = {head_dim * heads}, "
            f"got q {q.shape[1]}, k {k.shape[1]}"
        )
    acc = np.zeros(k.shape[0])
    inv = 1.0 / math.sqrt(head_dim)
    for h in range(heads):
        cols = slice(h * head_dim, (h + 1) * head_dim)
        logits = (q[:, cols] @ k[:, cols].T) * inv
        acc += softmax_row(logits).mean(axis=0)
    return acc / heads


def retention_schedule(length: int, cfg: ExtractorConfig) -> list[int]:
    """Per-block retained non-text counts for an initial count `length`.

    Each step keeps max(min_keep, ceil(keep_ratio * current)), clamped to the
    current count so the schedule never asks for more tokens than exist; a
    zero count stays zero.
    """
    if length < 0:
        raise ParameterError(f"length must be >= 0, got {length}")
    counts = []
    cur = length
    for _ in range(cfg.blocks):
        if cur > 0:
            cur = min(cur, max(cfg.min_keep, math.ceil(cfg.keep_ratio * cur)))
        counts.append(cur)
    return counts


def block_input_lengths(length: int, cfg: ExtractorConfig) -> list[int]:
    """Non-text token count each block actually processes: the original
    count for block 1, then the schedule shifted by one."""
    return [length] + retention_schedule(length, cfg)[:-1]


def prune(seq: TokenSequence, scores, keep: int) -> TokenSequence:
    """Retain all text tokens plus the `keep` highest-scoring non-text ones.

    Ties break toward the lower original position; output order is the
    input order. keep == candidate count is the identity.
    """
    scores = np.asarray(scores, dtype=np.float64)
    text = seq.text_mask()
    cand_idx = np.flatnonzero(~text)
    if scores.shape != (cand_idx.size,):
        raise ShapeError(
            f"scores length {scores.shape} does not match "
            f"{cand_idx.size} non-text tokens"
        )
    if keep < 0 or keep > cand_idx.size:
        raise ParameterError(f"keep={keep} outside [0, {cand_idx.size}]")
    # lexsort: primary key last; stable tie-break on position via first key
    order = np.lexsort((seq.orig_pos[cand_idx], -scores))
    selected = cand_idx[order[:keep]]
    keep_idx = np.sort(np.concatenate([np.flatnonzero(text), selected])).astype(np.int64)
    return seq.take(keep_idx)
