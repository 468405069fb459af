"""Token/modality data model, manifest file I/O, and synthetic embeddings.

Synthetic sequences stand in for real encoder outputs: background tokens are
seeded unit-variance noise, and an optional needle run is tilted toward a
query direction so query-conditioned attention can find it. All embeddings
are quantized to binary32 on creation so that the on-disk format (little
endian float32, row major) round-trips bit exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import FormatError, ParameterError, ShapeError

MODALITIES = ("text", "image", "video", "speech", "sound")

MANIFEST_SCHEMA = 1


def _quantize_f32(a: np.ndarray) -> np.ndarray:
    # binary32 values held in float64; keeps memory math exact w.r.t. files
    return a.astype("<f4").astype(np.float64)


@dataclass(frozen=True)
class TokenSequence:
    """Embedded tokens with per-token modality tags and original positions.

    embed holds one token per row (L x dim, float64). orig_pos is strictly
    increasing; pruning keeps relative order, so positions of survivors stay
    a subsequence of the input's.
    """

    embed: np.ndarray
    tags: tuple[str, ...]
    orig_pos: np.ndarray

    def __post_init__(self):
        embed = np.asarray(self.embed, dtype=np.float64)
        pos = np.asarray(self.orig_pos, dtype=np.int64)
        object.__setattr__(self, "embed", embed)
        object.__setattr__(self, "tags", tuple(self.tags))
        object.__setattr__(self, "orig_pos", pos)
        if embed.ndim != 2:
            raise ShapeError(f"embed must be 2-D, got shape {embed.shape}")
        if len(self.tags) != embed.shape[0] or pos.shape != (embed.shape[0],):
            raise ShapeError(
                f"length mismatch: embed rows {embed.shape[0]}, "
                f"tags {len(self.tags)}, orig_pos {pos.shape}"
            )
        for t in self.tags:
            if t not in MODALITIES:
                raise ParameterError(f"unknown modality tag {t!r}")
        if pos.size and (pos[0] < 0 or np.any(np.diff(pos) <= 0)):
            raise ParameterError("orig_pos must be non-negative and strictly increasing")

    def __len__(self) -> int:
        return self.embed.shape[0]

    @property
    def dim(self) -> int:
        return self.embed.shape[1]

    def text_mask(self) -> np.ndarray:
        return np.array([t == "text" for t in self.tags], dtype=bool)

    def take(self, indices: np.ndarray) -> "TokenSequence":
        """Order-preserving subset; indices must be sorted ascending."""
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size and np.any(np.diff(idx) <= 0):
            raise ParameterError("take() expects strictly increasing indices")
        return TokenSequence(
            embed=self.embed[idx],
            tags=tuple(self.tags[i] for i in idx),
            orig_pos=self.orig_pos[idx],
        )


def modality_key(seq_or_tags) -> str:
    """Canonical key for the set of modalities present: sorted, deduped,
    '+'-joined. Stable under any reordering of tokens."""
    tags = seq_or_tags.tags if isinstance(seq_or_tags, TokenSequence) else seq_or_tags
    present = set(tags)
    for t in present:
        if t not in MODALITIES:
            raise ParameterError(f"unknown modality tag {t!r}")
    return "+".join(sorted(present))


def concat(a: TokenSequence, b: TokenSequence) -> TokenSequence:
    """Join two sequences; b's positions are shifted past the end of a."""
    if len(a) == 0:
        return b
    if len(b) == 0:
        return a
    if a.dim != b.dim:
        raise ShapeError(f"dim mismatch: {a.dim} vs {b.dim}")
    shift = int(a.orig_pos[-1]) + 1
    return TokenSequence(
        embed=np.vstack([a.embed, b.embed]),
        tags=a.tags + b.tags,
        orig_pos=np.concatenate([a.orig_pos, b.orig_pos + shift]),
    )


@dataclass(frozen=True)
class Needle:
    """A contiguous run of tokens tilted toward a query direction."""

    start: int
    length: int
    query_vec: np.ndarray
    strength: float


@dataclass(frozen=True)
class Manifest:
    dim: int
    runs: tuple[tuple[str, int], ...]
    embedding_path: str
    needle_span: Optional[tuple[int, int]] = None  # (start, len)

    @property
    def total_len(self) -> int:
        return sum(n for _, n in self.runs)


def unit_vector(v, name: str = "query_vec") -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if not np.isfinite(norm) or norm == 0.0:
        raise ParameterError(f"{name} must be a finite non-zero vector")
    return v / norm


def synth_sequence(
    runs: Sequence[tuple[str, int]],
    dim: int,
    seed: int,
    needle: Optional[Needle] = None,
) -> TokenSequence:
    """Deterministic synthetic embedding sequence standing in for encoders.

    Background tokens are unit-variance Gaussian draws; needle tokens get
    strength * unit(query_vec) added on top, elevating their inner product
    with the query by `strength` while leaving everything else untouched.
    """
    if dim < 1:
        raise ParameterError(f"dim must be >= 1, got {dim}")
    total = 0
    tags: list[str] = []
    for tag, n in runs:
        if tag not in MODALITIES:
            raise ParameterError(f"unknown modality tag {tag!r}")
        if n < 0:
            raise ParameterError(f"run length must be >= 0, got {n}")
        tags.extend([tag] * n)
        total += n
    rng = np.random.default_rng(seed)
    embed = rng.standard_normal((total, dim))
    if needle is not None:
        if needle.length < 0 or needle.start < 0 or needle.start + needle.length > total:
            raise ParameterError(
                f"needle span [{needle.start}, {needle.start + needle.length}) "
                f"out of range for {total} tokens"
            )
        q = unit_vector(needle.query_vec)
        embed[needle.start : needle.start + needle.length] += needle.strength * q
    return TokenSequence(
        embed=_quantize_f32(embed),
        tags=tuple(tags),
        orig_pos=np.arange(total, dtype=np.int64),
    )


def query_embeddings(count: int, dim: int, query_vec, seed: int, noise: float = 0.1) -> np.ndarray:
    """Text-query token embeddings aligned with query_vec.

    Rows are sqrt(dim) * unit(query_vec) plus a small seeded jitter so they
    carry the query direction at the same overall scale as unit-variance
    background tokens.
    """
    if count < 0:
        raise ParameterError(f"count must be >= 0, got {count}")
    q = unit_vector(query_vec)
    rng = np.random.default_rng(seed)
    rows = np.sqrt(dim) * q[None, :] + noise * rng.standard_normal((count, dim))
    return _quantize_f32(rows)


# ---------------------------------------------------------------------------
# Manifest + embedding blob I/O
#
# Manifest: UTF-8 JSON. Embeddings: raw little-endian float32, row major,
# in a sidecar file so fixtures stay bit-exact and the parser stays tiny.
# ---------------------------------------------------------------------------


def write_embeddings(path, embed: np.ndarray) -> None:
    arr = np.ascontiguousarray(np.asarray(embed, dtype=np.float64).astype("<f4"))
    Path(path).write_bytes(arr.tobytes())


def read_embeddings(path, dim: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    if dim < 1:
        raise FormatError(f"dim must be >= 1, got {dim}")
    if len(raw) % (4 * dim) != 0:
        raise FormatError(
            f"embedding blob {path}: {len(raw)} bytes is not a multiple of 4*dim={4 * dim}"
        )
    flat = np.frombuffer(raw, dtype="<f4")
    return flat.reshape(-1, dim).astype(np.float64)


def read_manifest(path) -> Manifest:
    p = Path(path)
    if not p.exists():
        raise FormatError(f"manifest file not found: {p}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"manifest {p}: invalid JSON ({e})") from e
    for key in ("dim", "runs", "embedding_path"):
        if key not in doc:
            raise FormatError(f"manifest {p}: missing field {key!r}")
    runs = []
    for i, run in enumerate(doc["runs"]):
        if "tag" not in run or "len" not in run:
            raise FormatError(f"manifest {p}: runs[{i}] needs 'tag' and 'len'")
        if run["tag"] not in MODALITIES:
            raise FormatError(f"manifest {p}: runs[{i}].tag {run['tag']!r} is not a modality")
        if int(run["len"]) < 0:
            raise FormatError(f"manifest {p}: runs[{i}].len must be >= 0")
        runs.append((run["tag"], int(run["len"])))
    span = None
    if doc.get("needle_span") is not None:
        ns = doc["needle_span"]
        if "start" not in ns or "len" not in ns:
            raise FormatError(f"manifest {p}: needle_span needs 'start' and 'len'")
        span = (int(ns["start"]), int(ns["len"]))
        _check_span_in_one_run(runs, span, p)
    return Manifest(
        dim=int(doc["dim"]),
        runs=tuple(runs),
        embedding_path=str(doc["embedding_path"]),
        needle_span=span,
    )


def _check_span_in_one_run(runs, span, path) -> None:
    start, length = span
    offset = 0
    for tag, n in runs:
        if offset <= start and start + length <= offset + n:
            return
        offset += n
    raise FormatError(f"manifest {path}: needle_span {span} does not lie inside one run")


def load_manifest(path) -> TokenSequence:
    """Load a manifest plus its embedding blob into a fresh TokenSequence.

    Positions are assigned 0..L-1 and tags are expanded from the runs in
    order. Raises FormatError naming the offending field on any mismatch.
    """
    m = read_manifest(path)
    blob = Path(path).parent / m.embedding_path
    if not blob.exists():
        raise FormatError(f"embedding file not found: {blob}")
    embed = read_embeddings(blob, m.dim)
    if embed.shape[0] != m.total_len:
        raise FormatError(
            f"manifest {path}: runs sum to {m.total_len} tokens "
            f"but embedding blob has {embed.shape[0]} rows"
        )
    tags: list[str] = []
    for tag, n in m.runs:
        tags.extend([tag] * n)
    return TokenSequence(
        embed=embed, tags=tuple(tags), orig_pos=np.arange(len(tags), dtype=np.int64)
    )


def save_manifest(
    seq: TokenSequence,
    path,
    embedding_path: Optional[str] = None,
    needle_span: Optional[tuple[int, int]] = None,
) -> None:
    """Write a sequence as manifest JSON plus a float32 sidecar blob.

    Only source sequences (orig_pos == 0..L-1) can be saved; pruned
    intermediates would lose their position information in this format.
    """
    if not np.array_equal(seq.orig_pos, np.arange(len(seq))):
        raise ParameterError("save_manifest requires contiguous positions 0..L-1")
    p = Path(path)
    if embedding_path is None:
        embedding_path = p.stem + ".f32"
    runs = []
    for tag in seq.tags:
        if runs and runs[-1][0] == tag:
            runs[-1][1] += 1
        else:
            runs.append([tag, 1])
    doc = {
        "schema": MANIFEST_SCHEMA,
        "dim": seq.dim,
        "runs": [{"tag": t, "len": n} for t, n in runs],
        "embedding_path": embedding_path,
    }
    if needle_span is not None:
        doc["needle_span"] = {"start": int(needle_span[0]), "len": int(needle_span[1])}
        _check_span_in_one_run([(t, n) for t, n in runs], needle_span, p)
    write_embeddings(p.parent / embedding_path, seq.embed)
    p.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
