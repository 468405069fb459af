"""Long-audio chunking, temporal compression, and the haystack generator.

A synthetic encoder emits frames at a fixed rate (50/s by default, so a 30 s
clip is 1500 frames). Streams are split into fixed windows, each window is
mean-pooled along time by the pool factor (1500 frames -> 300 tokens at the
defaults), and the pooled windows are flattened back into one token
sequence. A two-hour stream is 360,000 raw frames and 72,000 compressed
tokens at the defaults.

The haystack generator plants a short query-aligned needle run inside an
otherwise random stream; together with the manifest exporter this feeds the
retrieval benchmark end to end.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, FormatError, ParameterError
from .modality import (
    Manifest,
    TokenSequence,
    _quantize_f32,
    concat,
    query_embeddings,
    save_manifest,
    unit_vector,
)

__all__ = [
    "ChunkConfig",
    "SpeechStream",
    "HaystackSpec",
    "chunk_and_compress",
    "compressed_length",
    "valid_compressed_length",
    "compress_span",
    "make_haystack",
    "derive_query_vec",
    "load_haystack_spec",
    "export_haystack",
]


@dataclass(frozen=True)
class ChunkConfig:
    """Window size, pooling factor, and frame rate of the synthetic encoder."""

    window_frames: int = 1500
    pool_factor: int = 5
    frames_per_second: int = 50

    def __post_init__(self):
        if self.window_frames < 1 or self.pool_factor < 1 or self.frames_per_second < 1:
            raise ConfigError("chunk parameters must all be positive")
        if self.window_frames % self.pool_factor != 0:
            raise ConfigError(
                f"window_frames {self.window_frames} not divisible by "
                f"pool_factor {self.pool_factor}"
            )

    @property
    def tokens_per_window(self) -> int:
        return self.window_frames // self.pool_factor


@dataclass(frozen=True)
class SpeechStream:
    """Raw synthetic encoder frames plus optional needle bookkeeping."""

    frames: np.ndarray                      # (T, dim) float64
    frames_per_second: int = 50
    needle_span: Optional[tuple[int, int]] = None  # (start, stop) frame range

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        object.__setattr__(self, "frames", frames)
        if frames.ndim != 2:
            raise ParameterError(f"frames must be 2-D, got shape {frames.shape}")
        if self.needle_span is not None:
            a, b = self.needle_span
            if not (0 <= a <= b <= frames.shape[0]):
                raise ParameterError(
                    f"needle_span {self.needle_span} outside [0, {frames.shape[0]})"
                )

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def duration_s(self) -> float:
        return self.num_frames / self.frames_per_second


def compressed_length(num_frames: int, cfg: ChunkConfig) -> int:
    """Token count after chunking: ceil(T / window) * tokens_per_window."""
    if num_frames < 0:
        raise ParameterError(f"num_frames must be >= 0, got {num_frames}")
    windows = math.ceil(num_frames / cfg.window_frames)
    return windows * cfg.tokens_per_window


def valid_compressed_length(num_frames: int, cfg: ChunkConfig) -> int:
    """Tokens containing at least one real (non padding) frame."""
    if num_frames < 0:
        raise ParameterError(f"num_frames must be >= 0, got {num_frames}")
    return math.ceil(num_frames / cfg.pool_factor)


def compress_span(span: tuple[int, int], cfg: ChunkConfig) -> tuple[int, int]:
    """Map a (start, stop) frame range to compressed-token coordinates by
    floor-dividing both endpoints; un-mapping covers the original span to
    within one pool group at each end."""
    a, b = span
    if a > b or a < 0:
        raise ParameterError(f"bad span {span}")
    return (a // cfg.pool_factor, max(b // cfg.pool_factor, a // cfg.pool_factor + 1))


def chunk_and_compress(stream: SpeechStream, cfg: ChunkConfig) -> TokenSequence:
    """Split into windows (zero-padding the last), mean-pool each by the
    pool factor, and flatten windows in temporal order into speech tokens."""
    T, dim = stream.frames.shape
    if T == 0:
        return TokenSequence(
            embed=np.zeros((0, dim)), tags=(), orig_pos=np.zeros(0, dtype=np.int64)
        )
    windows = math.ceil(T / cfg.window_frames)
    padded = np.zeros((windows * cfg.window_frames, dim))
    padded[:T] = stream.frames
    pooled = padded.reshape(windows * cfg.tokens_per_window, cfg.pool_factor, dim).mean(axis=1)
    n = pooled.shape[0]
    return TokenSequence(
        embed=pooled, tags=("speech",) * n, orig_pos=np.arange(n, dtype=np.int64)
    )


def derive_query_vec(seed: int, dim: int) -> np.ndarray:
    """Deterministic unit query direction for a haystack seed."""
    return unit_vector(np.random.default_rng([seed, 1]).standard_normal(dim))


@dataclass(frozen=True)
class HaystackNeedle:
    offset_s: float
    len_s: float
    query_vec: np.ndarray
    strength: float


def make_haystack(
    duration_s: float,
    needle: HaystackNeedle,
    cfg: ChunkConfig,
    dim: int,
    seed: int,
) -> SpeechStream:
    """Seeded background frames with one needle run elevated toward the
    query direction (same additive construction as synthetic sequences)."""
    if duration_s <= 0:
        raise ParameterError(f"duration_s must be positive, got {duration_s}")
    if dim < 1:
        raise ParameterError(f"dim must be >= 1, got {dim}")
    T = int(round(duration_s * cfg.frames_per_second))
    start = int(round(needle.offset_s * cfg.frames_per_second))
    length = int(round(needle.len_s * cfg.frames_per_second))
    if length < 0 or start < 0 or start + length > T:
        raise ParameterError(
            f"needle frames [{start}, {start + length}) do not fit in {T} frames"
        )
    rng = np.random.default_rng(seed)
    frames = rng.standard_normal((T, dim))
    q = unit_vector(needle.query_vec)
    frames[start : start + length] += needle.strength * q
    return SpeechStream(
        frames=_quantize_f32(frames),
        frames_per_second=cfg.frames_per_second,
        needle_span=(start, start + length),
    )


# ---------------------------------------------------------------------------
# Haystack spec file: JSON description of one stream, exported as a manifest
# plus embedding blob so the model can prefill it directly.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HaystackSpec:
    duration_s: float
    needle_offset_s: float
    needle_len_s: float
    strength: float
    seed: int
    dim: int
    chunk: ChunkConfig = ChunkConfig()
    query_tokens: int = 16


def load_haystack_spec(path) -> HaystackSpec:
    p = Path(path)
    if not p.exists():
        raise FormatError(f"haystack spec not found: {p}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"haystack spec {p}: invalid JSON ({e})") from e
    for key in ("duration_s", "needle", "seed", "dim"):
        if key not in doc:
            raise FormatError(f"haystack spec {p}: missing field {key!r}")
    needle = doc["needle"]
    for key in ("offset_s", "len_s", "strength"):
        if key not in needle:
            raise FormatError(f"haystack spec {p}: needle missing field {key!r}")
    chunk = ChunkConfig(**doc.get("chunk", {}))
    return HaystackSpec(
        duration_s=float(doc["duration_s"]),
        needle_offset_s=float(needle["offset_s"]),
        needle_len_s=float(needle["len_s"]),
        strength=float(needle["strength"]),
        seed=int(doc["seed"]),
        dim=int(doc["dim"]),
        chunk=chunk,
        query_tokens=int(doc.get("query_tokens", 16)),
    )


def build_haystack_sequence(spec: HaystackSpec) -> tuple[TokenSequence, tuple[int, int]]:
    """Query tokens followed by the compressed stream; returns the sequence
    and the needle span in its position coordinates."""
    q = derive_query_vec(spec.seed, spec.dim)
    stream = make_haystack(
        spec.duration_s,
        HaystackNeedle(spec.needle_offset_s, spec.needle_len_s, q, spec.strength),
        spec.chunk,
        spec.dim,
        spec.seed,
    )
    speech = chunk_and_compress(stream, spec.chunk)
    cspan = compress_span(stream.needle_span, spec.chunk)
    if spec.query_tokens > 0:
        text = TokenSequence(
            embed=query_embeddings(spec.query_tokens, spec.dim, q, seed=spec.seed + 1),
            tags=("text",) * spec.query_tokens,
            orig_pos=np.arange(spec.query_tokens, dtype=np.int64),
        )
        seq = concat(text, speech)
        span = (cspan[0] + spec.query_tokens, cspan[1] + spec.query_tokens)
    else:
        seq, span = speech, cspan
    return seq, span


def export_haystack(spec: HaystackSpec, out_dir, name: str = "haystack") -> Path:
    """Write the haystack as manifest + blob; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seq, span = build_haystack_sequence(spec)
    manifest_path = out / f"{name}.manifest.json"
    save_manifest(seq, manifest_path, needle_span=(span[0], span[1] - span[0]))
    return manifest_path
