"""Low-rank adapters keyed by the combination of modalities in the input.

Each adapter is a pair (A, B) attached to a frozen base weight W; the
adapted product is (scale * B A + W) X, evaluated factored so the dense
B A is never materialized at runtime. Adapters are selected by the
canonical modality-combination key ("image+text", "speech", ...); a missing
key falls back to the base weight unchanged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import FormatError, ParameterError, ShapeError
from .modality import modality_key
from .numerics import as_matrix

__all__ = ["Adapter", "AdapterSet", "new_adapter", "apply", "apply_rows", "merge",
           "save_adapter", "load_adapter"]


@dataclass(frozen=True)
class Adapter:
    """A (rank x d_in) down projection and (d_out x rank) up projection.

    scale is alpha / rank. B starts at zero so a fresh adapter is an exact
    no-op on the base weights.
    """

    a: np.ndarray  # (rank, d_in)
    b: np.ndarray  # (d_out, rank)
    scale: float = 1.0

    def __post_init__(self):
        a = as_matrix(self.a, "A")
        b = as_matrix(self.b, "B")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        if a.shape[0] != b.shape[1]:
            raise ShapeError(f"rank mismatch: A is {a.shape}, B is {b.shape}")
        r = a.shape[0]
        if r < 1:
            raise ParameterError("rank must be >= 1")
        if r > min(a.shape[1], b.shape[0]):
            raise ParameterError(
                f"rank {r} exceeds min(d_in={a.shape[1]}, d_out={b.shape[0]})"
            )

    @property
    def rank(self) -> int:
        return self.a.shape[0]

    @property
    def d_in(self) -> int:
        return self.a.shape[1]

    @property
    def d_out(self) -> int:
        return self.b.shape[0]


def new_adapter(d_in: int, d_out: int, rank: int, seed: int, alpha: Optional[float] = None) -> Adapter:
    """Fresh adapter: A from a seeded small-variance normal, B all zeros.

    alpha defaults to rank, so scale = alpha / rank = 1.
    """
    if rank < 1 or rank > min(d_in, d_out):
        raise ParameterError(f"rank {rank} outside [1, min({d_in}, {d_out})]")
    rng = np.random.default_rng(seed)
    a = rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(rank, d_in))
    b = np.zeros((d_out, rank))
    scale = 1.0 if alpha is None else alpha / rank
    return Adapter(a=a, b=b, scale=scale)


def apply(adapter: Adapter, w, x) -> np.ndarray:
    """Adapted product (scale * B A + W) X with X holding one token per column.

    Computed as W X + scale * B (A X); the dense B A never exists.
    """
    w = as_matrix(w, "W")
    x = as_matrix(x, "X")
    if w.shape != (adapter.d_out, adapter.d_in):
        raise ShapeError(f"W is {w.shape}, adapter expects ({adapter.d_out}, {adapter.d_in})")
    if x.shape[0] != adapter.d_in:
        raise ShapeError(f"X has {x.shape[0]} rows, expected d_in={adapter.d_in}")
    return w @ x + adapter.scale * (adapter.b @ (adapter.a @ x))


def apply_rows(adapter: Optional[Adapter], w: np.ndarray, x_rows: np.ndarray) -> np.ndarray:
    """Row-major convenience used by the model: tokens as rows of x_rows.

    adapter=None degrades to the plain base projection x W^T.
    """
    if adapter is None:
        return x_rows @ w.T
    if w.shape != (adapter.d_out, adapter.d_in):
        raise ShapeError(f"W is {w.shape}, adapter expects ({adapter.d_out}, {adapter.d_in})")
    return x_rows @ w.T + adapter.scale * ((x_rows @ adapter.a.T) @ adapter.b.T)


def merge(adapter: Adapter, w) -> np.ndarray:
    """Fold the adapter into the base weight: W + scale * B A.

    Merging twice adds B A twice; this is deliberate plain algebra, not an
    idempotent operation.
    """
    w = as_matrix(w, "W")
    if w.shape != (adapter.d_out, adapter.d_in):
        raise ShapeError(f"W is {w.shape}, adapter expects ({adapter.d_out}, {adapter.d_in})")
    return w + adapter.scale * (adapter.b @ adapter.a)


class AdapterSet:
    """Adapters indexed by (site, modality-combination key).

    Keys must already be canonical (sorted, '+'-joined); at most one adapter
    per (site, key).
    """

    def __init__(self):
        self._entries: dict[tuple[str, str], Adapter] = {}

    def __len__(self) -> int:
        return len(self._entries)

    @staticmethod
    def _check_key(key: str) -> None:
        parts = key.split("+") if key else []
        if key != modality_key(parts):
            raise ParameterError(f"key {key!r} is not canonical (sorted, deduped, '+'-joined)")

    def add(self, site: str, key: str, adapter: Adapter) -> None:
        self._check_key(key)
        if (site, key) in self._entries:
            raise ParameterError(f"adapter already registered for ({site!r}, {key!r})")
        self._entries[(site, key)] = adapter

    def select(self, site: str, key: str) -> Optional[Adapter]:
        """Exact-key lookup; None means the caller uses base weights."""
        self._check_key(key)
        return self._entries.get((site, key))

    def items(self):
        return self._entries.items()


# ---------------------------------------------------------------------------
# Checkpoint format: one JSON header line, then the A and B blobs as raw
# little-endian float32, row major, in that order.
# ---------------------------------------------------------------------------


def save_adapter(path, site: str, key: str, adapter: Adapter) -> None:
    AdapterSet._check_key(key)
    header = {
        "site": site,
        "key": key,
        "rank": adapter.rank,
        "scale": adapter.scale,
        "d_in": adapter.d_in,
        "d_out": adapter.d_out,
    }
    a32 = np.ascontiguousarray(adapter.a.astype("<f4"))
    b32 = np.ascontiguousarray(adapter.b.astype("<f4"))
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode("utf-8"))
        fh.write(a32.tobytes())
        fh.write(b32.tobytes())


def load_adapter(path) -> tuple[str, str, Adapter]:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise FormatError(f"adapter file {path}: missing header line")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"adapter file {path}: bad header ({e})") from e
    for fieldname in ("site", "key", "rank", "scale", "d_in", "d_out"):
        if fieldname not in header:
            raise FormatError(f"adapter file {path}: header missing {fieldname!r}")
    r, d_in, d_out = int(header["rank"]), int(header["d_in"]), int(header["d_out"])
    body = raw[nl + 1 :]
    expect = 4 * (r * d_in + d_out * r)
    if len(body) != expect:
        raise FormatError(
            f"adapter file {path}: body has {len(body)} bytes, expected {expect}"
        )
    a = np.frombuffer(body[: 4 * r * d_in], dtype="<f4").reshape(r, d_in).astype(np.float64)
    b = np.frombuffer(body[4 * r * d_in :], dtype="<f4").reshape(d_out, r).astype(np.float64)
    return header["site"], header["key"], Adapter(a=a, b=b, scale=float(header["scale"]))
