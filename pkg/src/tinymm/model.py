"""Deterministic toy decoder-only transformer with a prunable KV cache.

Pre-norm residual blocks, causal multi-head attention, a GELU MLP, and a
learned output head. Input embeddings must already be at model width; a
fixed sinusoidal encoding of each token's original position is added once
at the input, so pruned survivors keep their original geometry.

When an extractor config is present the layer stack is split into equal
blocks. After the final layer of each block, non-text tokens are scored
against the text queries using that layer's own attention projections and
only the top fraction survives into later layers. Each layer's KV cache
keeps the rows of the tokens that layer actually processed, which is what
decode steps attend to; pruning therefore shrinks the caches of later
layers, not of layers that already ran.

Query and key projections are initialized identical in every layer. With
untrained random weights this makes query-aligned content score positively
under every seed (the query/key bilinear form becomes positive
semidefinite), standing in for what trained attention learns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .adapters import AdapterSet, apply_rows
from .errors import ConfigError, ParameterError, ShapeError
from .extractor import (
    BlockTrace,
    ExtractorConfig,
    PruneTrace,
    prune,
    relevance_scores,
    retention_schedule,
)
from .modality import TokenSequence, modality_key

__all__ = [
    "ModelConfig",
    "Model",
    "KvCache",
    "LayerCache",
    "PrefillResult",
    "init_model",
    "prefill",
    "decode_step",
    "generate_greedy",
    "kv_bytes",
]


@dataclass
class ModelConfig:
    layers: int
    heads: int
    dim: int
    vocab: int
    seed: int
    extractor: Optional[ExtractorConfig] = None
    adapters: Optional[AdapterSet] = None
    init_scale: float = 0.02   # residual branches stay small next to embeddings
    pos_scale: float = 0.25    # keeps positions from drowning content directions

    def __post_init__(self):
        if self.layers < 1 or self.heads < 1 or self.dim < 1 or self.vocab < 1:
            raise ConfigError("layers, heads, dim, and vocab must all be >= 1")
        if self.dim % self.heads != 0:
            raise ConfigError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.extractor is not None and self.layers % self.extractor.blocks != 0:
            raise ConfigError(
                f"layers {self.layers} not divisible by extractor blocks "
                f"{self.extractor.blocks}"
            )

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads


@dataclass
class LayerWeights:
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray
    w_up: np.ndarray
    b_up: np.ndarray
    w_down: np.ndarray
    b_down: np.ndarray


@dataclass
class Model:
    cfg: ModelConfig
    tok_embed: np.ndarray
    layers: list[LayerWeights]
    ln_f_g: np.ndarray
    ln_f_b: np.ndarray
    w_head: np.ndarray


@dataclass
class LayerCache:
    k: np.ndarray
    v: np.ndarray
    pos: np.ndarray
    tags: tuple[str, ...]

    @property
    def rows(self) -> int:
        return self.k.shape[0]


@dataclass
class KvCache:
    layers: list[LayerCache] = field(default_factory=list)
    next_pos: int = 0
    adapter_key: str = ""


@dataclass
class PrefillResult:
    logits: np.ndarray       # (survivors, vocab)
    cache: KvCache
    trace: PruneTrace
    kept_pos: np.ndarray     # original positions the logits correspond to
    attn: Optional[list[np.ndarray]] = None  # per layer (heads, L, L), tests only


def init_model(cfg: ModelConfig) -> Model:
    """All weights from one seeded generator; equal seeds mean equal models."""
    rng = np.random.default_rng(cfg.seed)
    d, s = cfg.dim, cfg.init_scale
    tok_embed = rng.standard_normal((cfg.vocab, d))
    layers = []
    for _ in range(cfg.layers):
        wq = rng.normal(0.0, s, size=(d, d))
        wv = rng.normal(0.0, s, size=(d, d))
        wo = rng.normal(0.0, s, size=(d, d))
        w_up = rng.normal(0.0, s, size=(4 * d, d))
        w_down = rng.normal(0.0, s, size=(d, 4 * d))
        layers.append(
            LayerWeights(
                ln1_g=np.ones(d), ln1_b=np.zeros(d),
                wq=wq, wk=wq.copy(), wv=wv, wo=wo,
                ln2_g=np.ones(d), ln2_b=np.zeros(d),
                w_up=w_up, b_up=np.zeros(4 * d),
                w_down=w_down, b_down=np.zeros(d),
            )
        )
    w_head = rng.normal(0.0, s, size=(cfg.vocab, d))
    return Model(
        cfg=cfg, tok_embed=tok_embed, layers=layers,
        ln_f_g=np.ones(d), ln_f_b=np.zeros(d), w_head=w_head,
    )


def sinusoid_positions(pos, dim: int) -> np.ndarray:
    """Fixed sin/cos encoding of absolute positions (split-half layout)."""
    pos = np.asarray(pos, dtype=np.float64)[:, None]
    half = dim // 2
    if half == 0:
        return np.zeros((pos.shape[0], dim))
    freq = np.exp(-math.log(10000.0) * np.arange(half) / max(half - 1, 1))
    ang = pos * freq[None, :]
    out = np.zeros((pos.shape[0], dim))
    out[:, :half] = np.sin(ang)
    out[:, half : 2 * half] = np.cos(ang)
    return out


def _layer_norm(x, g, b, eps: float = 1e-5) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * g + b


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(0.79788456080286536 * (x + 0.044715 * x**3)))


def _proj(model: Model, layer_idx: int, name: str, w, x_rows, key: str) -> np.ndarray:
    ad = None
    if model.cfg.adapters is not None and key:
        ad = model.cfg.adapters.select(f"layer{layer_idx}.{name}", key)
    return apply_rows(ad, w, x_rows)


def _causal_attention(q, k, v, heads: int, mask: np.ndarray, collect: Optional[list] = None):
    """Per-head scaled dot-product attention under a strict upper mask."""
    L, d = q.shape
    dh = d // heads
    out = np.empty_like(q)
    probs = np.empty((heads, L, L)) if collect is not None else None
    for h in range(heads):
        cols = slice(h * dh, (h + 1) * dh)
        s = q[:, cols] @ k[:, cols].T
        s *= 1.0 / math.sqrt(dh)
        np.copyto(s, -np.inf, where=mask)
        s -= s.max(axis=1, keepdims=True)
        np.exp(s, out=s)
        s /= s.sum(axis=1, keepdims=True)
        out[:, cols] = s @ v[:, cols]
        if probs is not None:
            probs[h] = s
    if collect is not None:
        collect.append(probs)
    return out


def prefill(
    model: Model,
    seq: TokenSequence,
    needle_span: Optional[tuple[int, int]] = None,
    collect_attn: bool = False,
) -> PrefillResult:
    """Run the causal stack over the whole prompt, pruning at block ends.

    Returns logits for the surviving positions, the per-layer KV cache, and
    a trace of what each block kept. needle_span (a half-open orig_pos
    range) only adds overlap bookkeeping to the trace.
    """
    cfg = model.cfg
    if len(seq) == 0:
        raise ParameterError("cannot prefill an empty sequence")
    if seq.dim != cfg.dim:
        raise ShapeError(f"sequence dim {seq.dim} does not match model dim {cfg.dim}")

    key = modality_key(seq)
    ext = cfg.extractor
    block_len = cfg.layers // ext.blocks if ext is not None else 0

    h = seq.embed + cfg.pos_scale * sinusoid_positions(seq.orig_pos, cfg.dim)
    tags = list(seq.tags)
    pos = seq.orig_pos.copy()
    is_text = seq.text_mask()

    cache = KvCache(next_pos=int(seq.orig_pos[-1]) + 1, adapter_key=key)
    trace = PruneTrace()
    attn_collect: Optional[list] = [] if collect_attn else None
    mask = _strict_upper(len(tags))

    for li, lw in enumerate(model.layers):
        xn = _layer_norm(h, lw.ln1_g, lw.ln1_b)
        q = _proj(model, li, "q", lw.wq, xn, key)
        k = _proj(model, li, "k", lw.wk, xn, key)
        v = _proj(model, li, "v", lw.wv, xn, key)
        cache.layers.append(LayerCache(k=k, v=v, pos=pos.copy(), tags=tuple(tags)))
        att = _causal_attention(q, k, v, cfg.heads, mask, attn_collect)
        h = h + _proj(model, li, "o", lw.wo, att, key)
        hn = _layer_norm(h, lw.ln2_g, lw.ln2_b)
        h = h + (_gelu(hn @ lw.w_up.T + lw.b_up)) @ lw.w_down.T + lw.b_down

        if ext is not None and (li + 1) % block_len == 0:
            nontext = int((~is_text).sum())
            if nontext == 0 or is_text.sum() == 0:
                continue  # nothing to score against, or nothing to drop
            scores = relevance_scores(q[is_text], k[~is_text], cfg.head_dim, cfg.heads)
            keep = retention_schedule(nontext, ext)[0]
            current = TokenSequence(embed=h, tags=tuple(tags), orig_pos=pos)
            pruned = prune(current, scores, keep)
            overlap = None
            if needle_span is not None:
                a, b = needle_span
                kept_nontext = pruned.orig_pos[~pruned.text_mask()]
                overlap = int(np.count_nonzero((kept_nontext >= a) & (kept_nontext < b)))
            trace.blocks.append(
                BlockTrace(
                    layer=li,
                    kept_pos=pruned.orig_pos.copy(),
                    cand_pos=pos[~is_text].copy(),
                    scores=scores,
                    needle_overlap=overlap,
                )
            )
            h = pruned.embed
            tags = list(pruned.tags)
            pos = pruned.orig_pos.copy()
            is_text = pruned.text_mask()
            mask = _strict_upper(len(tags))

    logits = _layer_norm(h, model.ln_f_g, model.ln_f_b) @ model.w_head.T
    return PrefillResult(
        logits=logits, cache=cache, trace=trace, kept_pos=pos.copy(), attn=attn_collect
    )


def _strict_upper(n: int) -> np.ndarray:
    return np.triu(np.ones((n, n), dtype=bool), k=1)


def decode_step(model: Model, cache: KvCache, token_embed) -> np.ndarray:
    """Append one generated token to every layer's cache and return its
    logits. Generated tokens are tagged text and are never pruned. The
    cache is updated in place.
    """
    cfg = model.cfg
    x = np.asarray(token_embed, dtype=np.float64)
    if x.shape != (cfg.dim,):
        raise ShapeError(f"token embedding must have shape ({cfg.dim},), got {x.shape}")
    if len(cache.layers) != cfg.layers:
        raise ShapeError(
            f"cache has {len(cache.layers)} layers, model has {cfg.layers}"
        )
    key = cache.adapter_key
    p = cache.next_pos
    h = (x + cfg.pos_scale * sinusoid_positions([p], cfg.dim)[0])[None, :]

    for li, lw in enumerate(model.layers):
        lc = cache.layers[li]
        xn = _layer_norm(h, lw.ln1_g, lw.ln1_b)
        q = _proj(model, li, "q", lw.wq, xn, key)
        k_new = _proj(model, li, "k", lw.wk, xn, key)
        v_new = _proj(model, li, "v", lw.wv, xn, key)
        k_all = np.vstack([lc.k, k_new])
        v_all = np.vstack([lc.v, v_new])
        cache.layers[li] = LayerCache(
            k=k_all,
            v=v_all,
            pos=np.concatenate([lc.pos, np.array([p], dtype=np.int64)]),
            tags=lc.tags + ("text",),
        )
        dh = cfg.head_dim
        out = np.empty_like(q)
        for hh in range(cfg.heads):
            cols = slice(hh * dh, (hh + 1) * dh)
            s = (q[:, cols] @ k_all[:, cols].T) / math.sqrt(dh)
            s -= s.max(axis=1, keepdims=True)
            np.exp(s, out=s)
            s /= s.sum(axis=1, keepdims=True)
            out[:, cols] = s @ v_all[:, cols]
        h = h + _proj(model, li, "o", lw.wo, out, key)
        hn = _layer_norm(h, lw.ln2_g, lw.ln2_b)
        h = h + (_gelu(hn @ lw.w_up.T + lw.b_up)) @ lw.w_down.T + lw.b_down

    cache.next_pos = p + 1
    return (_layer_norm(h, model.ln_f_g, model.ln_f_b) @ model.w_head.T)[0]


def generate_greedy(model: Model, result: PrefillResult, steps: int) -> list[int]:
    """Argmax decoding from the last prefill position; deterministic."""
    if steps < 0:
        raise ParameterError(f"steps must be >= 0, got {steps}")
    logits = result.logits[-1]
    out = []
    for _ in range(steps):
        tok = int(np.argmax(logits))
        out.append(tok)
        logits = decode_step(model, result.cache, model.tok_embed[tok])
    return out


def kv_bytes(cache: KvCache, bytes_per_elem: int) -> int:
    """Total key+value bytes: sum over layers of 2 * rows * dim * bytes."""
    if bytes_per_elem < 0:
        raise ParameterError(f"bytes_per_elem must be >= 0, got {bytes_per_elem}")
    total = 0
    for lc in cache.layers:
        total += 2 * lc.rows * lc.k.shape[1] * bytes_per_elem
    return total
