"""Benchmark harness: prefill latency, decode throughput, KV memory, train
step time, and the needle retrieval grid, for baseline vs. pruned variants.

Measurements are wall-clock medians over repeats after a warmup run, on a
single thread, one cell at a time. Memory is analytic (KV byte accounting
plus the peak attention-matrix element count), never process RSS, so every
number is hardware independent and exactly checkable: the harness raises
InvariantViolation whenever a measured KV size disagrees with the closed
form. Cells whose analytic footprint exceeds the optional byte budget are
recorded as "oom" rather than run.

Reports are written as JSON (full), CSV (variant, length, metric, value,
predicted, ratio_vs_baseline), and a plain-text summary. Model outputs per
cell are digested so reruns with the same seed and config can be compared
bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import statistics
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .adapters import new_adapter, apply_rows
from .alignment import AlignConfig, alignment_grad
from .errors import ConfigError, InvariantViolation, ParameterError
from .extractor import ExtractorConfig, block_input_lengths, retention_schedule
from .longaudio import ChunkConfig, HaystackSpec, build_haystack_sequence
from .modality import TokenSequence, concat, query_embeddings, synth_sequence, unit_vector
from .model import Model, ModelConfig, generate_greedy, init_model, kv_bytes, prefill

SCHEMA_VERSION = 1

__all__ = [
    "Variant",
    "BenchConfig",
    "BenchCell",
    "BenchReport",
    "NeedleBenchConfig",
    "NeedleCell",
    "NeedleReport",
    "default_model_config",
    "default_bench_config",
    "default_needle_config",
    "run_prefill_bench",
    "run_decode_bench",
    "run_train_step_bench",
    "run_needle",
    "write_bench_report",
    "write_needle_report",
    "bench_config_from_dict",
    "needle_config_from_dict",
]


@dataclass(frozen=True)
class Variant:
    name: str
    extractor: Optional[ExtractorConfig] = None


@dataclass
class BenchConfig:
    model: ModelConfig
    context_lengths: list[int]
    variants: list[Variant]
    decode_steps: int = 48
    repeats: int = 3
    warmup: int = 1
    bytes_per_elem: int = 2
    text_tokens: int = 16
    filler_tag: str = "speech"
    seed: int = 0
    mem_budget_bytes: Optional[int] = None

    def __post_init__(self):
        if self.repeats < 3:
            raise ConfigError(f"repeats must be >= 3 (median), got {self.repeats}")
        if self.warmup < 0:
            raise ConfigError("warmup must be >= 0")
        if not self.variants:
            raise ConfigError("need at least one variant")
        if sorted(self.context_lengths) != list(self.context_lengths):
            raise ConfigError("context_lengths must be sorted ascending")
        if any(l <= self.text_tokens for l in self.context_lengths):
            raise ConfigError("every context length must exceed text_tokens")
        if self.model.extractor is not None:
            raise ConfigError("put extractors on variants, not on the base model")


def default_model_config(seed: int = 7) -> ModelConfig:
    # small enough that the 2^13 cell finishes in minutes on one laptop core
    return ModelConfig(layers=4, heads=2, dim=32, vocab=128, seed=seed)


def default_bench_config(kind: str = "prefill") -> BenchConfig:
    variants = [
        Variant("baseline"),
        Variant("prune-4x0.8", ExtractorConfig(4, 0.8)),
        Variant("prune-4x0.7", ExtractorConfig(4, 0.7)),
    ]
    if kind == "prefill":
        lengths = [2**p for p in range(8, 14)]
    elif kind == "decode":
        lengths = [2**13]
    elif kind == "train":
        lengths = [2**11, 2**12]
        variants = [
            Variant("baseline"),
            Variant("prune-4x0.9", ExtractorConfig(4, 0.9)),
            Variant("prune-4x0.8", ExtractorConfig(4, 0.8)),
            Variant("prune-4x0.7", ExtractorConfig(4, 0.7)),
        ]
    else:
        raise ConfigError(f"unknown bench kind {kind!r}")
    return BenchConfig(model=default_model_config(), context_lengths=lengths, variants=variants)


@dataclass
class BenchCell:
    variant: str
    length: int
    status: str = "ok"  # "ok" or "oom"
    prefill_seconds: Optional[float] = None
    decode_tps: Optional[float] = None
    train_step_seconds: Optional[float] = None
    kv_bytes_measured: Optional[int] = None
    kv_bytes_predicted: Optional[int] = None
    peak_attn_elements: Optional[int] = None
    flops_predicted: Optional[int] = None
    output_digest: Optional[str] = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass
class BenchReport:
    kind: str
    cells: list[BenchCell]
    metadata: dict

    def cell(self, variant: str, length: int) -> BenchCell:
        for c in self.cells:
            if c.variant == variant and c.length == length:
                return c
        raise KeyError(f"no cell ({variant!r}, {length})")

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "metadata": self.metadata,
            "cells": [c.to_dict() for c in self.cells],
        }


# ---------------------------------------------------------------------------
# Config serialization (JSON files for the CLI) and hashing
# ---------------------------------------------------------------------------


def _extractor_to_dict(ext: Optional[ExtractorConfig]) -> Optional[dict]:
    if ext is None:
        return None
    return {"blocks": ext.blocks, "keep_ratio": ext.keep_ratio, "min_keep": ext.min_keep}


def _extractor_from_dict(d: Optional[dict]) -> Optional[ExtractorConfig]:
    if d is None:
        return None
    return ExtractorConfig(
        blocks=int(d["blocks"]),
        keep_ratio=float(d["keep_ratio"]),
        min_keep=int(d.get("min_keep", 1)),
    )


def model_config_to_dict(m: ModelConfig) -> dict:
    return {
        "layers": m.layers,
        "heads": m.heads,
        "dim": m.dim,
        "vocab": m.vocab,
        "seed": m.seed,
        "init_scale": m.init_scale,
        "pos_scale": m.pos_scale,
    }


def model_config_from_dict(d: dict) -> ModelConfig:
    base = default_model_config()
    return ModelConfig(
        layers=int(d.get("layers", base.layers)),
        heads=int(d.get("heads", base.heads)),
        dim=int(d.get("dim", base.dim)),
        vocab=int(d.get("vocab", base.vocab)),
        seed=int(d.get("seed", base.seed)),
        init_scale=float(d.get("init_scale", base.init_scale)),
        pos_scale=float(d.get("pos_scale", base.pos_scale)),
    )


def bench_config_to_dict(cfg: BenchConfig) -> dict:
    return {
        "model": model_config_to_dict(cfg.model),
        "context_lengths": list(cfg.context_lengths),
        "variants": [
            {"name": v.name, "extractor": _extractor_to_dict(v.extractor)}
            for v in cfg.variants
        ],
        "decode_steps": cfg.decode_steps,
        "repeats": cfg.repeats,
        "warmup": cfg.warmup,
        "bytes_per_elem": cfg.bytes_per_elem,
        "text_tokens": cfg.text_tokens,
        "filler_tag": cfg.filler_tag,
        "seed": cfg.seed,
        "mem_budget_bytes": cfg.mem_budget_bytes,
    }


def bench_config_from_dict(d: dict, kind: str = "prefill") -> BenchConfig:
    base = default_bench_config(kind)
    variants = base.variants
    if "variants" in d:
        variants = []
        for v in d["variants"]:
            ext = v.get("extractor")
            if ext is None and ("blocks" in v or "keep_ratio" in v):
                ext = {k: v[k] for k in ("blocks", "keep_ratio", "min_keep") if k in v}
            variants.append(Variant(name=v["name"], extractor=_extractor_from_dict(ext)))
    return BenchConfig(
        model=model_config_from_dict(d.get("model", {})),
        context_lengths=[int(x) for x in d.get("context_lengths", base.context_lengths)],
        variants=variants,
        decode_steps=int(d.get("decode_steps", base.decode_steps)),
        repeats=int(d.get("repeats", base.repeats)),
        warmup=int(d.get("warmup", base.warmup)),
        bytes_per_elem=int(d.get("bytes_per_elem", base.bytes_per_elem)),
        text_tokens=int(d.get("text_tokens", base.text_tokens)),
        filler_tag=str(d.get("filler_tag", base.filler_tag)),
        seed=int(d.get("seed", base.seed)),
        mem_budget_bytes=d.get("mem_budget_bytes"),
    )


def _config_hash(doc: dict) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode("utf-8")).hexdigest()[:16]


def _metadata(cfg_doc: dict, seed: int) -> dict:
    return {
        "seed": seed,
        "config_hash": _config_hash(cfg_doc),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }


# ---------------------------------------------------------------------------
# Analytic cost model
# ---------------------------------------------------------------------------


def predicted_layer_rows(
    layers: int, text: int, nontext: int, ext: Optional[ExtractorConfig]
) -> list[int]:
    """KV rows per layer: each layer holds the tokens it processed."""
    if ext is None or text == 0 or nontext == 0:
        return [text + nontext] * layers
    per_block = layers // ext.blocks
    rows = []
    for n in block_input_lengths(nontext, ext):
        rows.extend([text + n] * per_block)
    return rows


def predict_kv_bytes(rows: list[int], dim: int, bytes_per_elem: int) -> int:
    return sum(2 * r * dim * bytes_per_elem for r in rows)


def peak_attention_elements(rows: list[int]) -> int:
    # heads are processed sequentially, so the peak matrix is rows x rows
    return max(rows) ** 2 if rows else 0


def predict_prefill_flops(rows: list[int], dim: int, vocab: int, final_rows: int) -> int:
    """Matmul flops only: 4 projections + 2 attention products + the MLP per
    layer, plus the output head over surviving rows."""
    total = 0
    for r in rows:
        total += 24 * r * dim * dim + 4 * r * r * dim
    total += 2 * final_rows * dim * vocab
    return total


def _predicted_footprint_bytes(cfg: BenchConfig, rows: list[int]) -> int:
    kv = predict_kv_bytes(rows, cfg.model.dim, cfg.bytes_per_elem)
    return kv + peak_attention_elements(rows) * cfg.bytes_per_elem


# ---------------------------------------------------------------------------
# Cell inputs
# ---------------------------------------------------------------------------


def _cell_query(cfg: BenchConfig) -> np.ndarray:
    return unit_vector(np.random.default_rng([cfg.seed, 7]).standard_normal(cfg.model.dim))


def _cell_sequence(cfg: BenchConfig, length: int) -> TokenSequence:
    """Mostly non-text filler plus a small fixed text query."""
    dim = cfg.model.dim
    q = _cell_query(cfg)
    text = TokenSequence(
        embed=query_embeddings(cfg.text_tokens, dim, q, seed=cfg.seed * 1_000_003 + 1),
        tags=("text",) * cfg.text_tokens,
        orig_pos=np.arange(cfg.text_tokens, dtype=np.int64),
    )
    filler = synth_sequence(
        [(cfg.filler_tag, length - cfg.text_tokens)],
        dim,
        seed=cfg.seed * 1_000_003 + length,
    )
    return concat(text, filler)


def _digest(*arrays: np.ndarray) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()[:16]


def _variant_model(cfg: BenchConfig, variant: Variant) -> Model:
    return init_model(replace(cfg.model, extractor=variant.extractor))


def _cell_prediction(cfg: BenchConfig, variant: Variant, length: int) -> tuple[list[int], BenchCell]:
    nontext = length - cfg.text_tokens
    rows = predicted_layer_rows(cfg.model.layers, cfg.text_tokens, nontext, variant.extractor)
    if variant.extractor is not None:
        final_rows = cfg.text_tokens + retention_schedule(nontext, variant.extractor)[-1]
    else:
        final_rows = length
    cell = BenchCell(
        variant=variant.name,
        length=length,
        kv_bytes_predicted=predict_kv_bytes(rows, cfg.model.dim, cfg.bytes_per_elem),
        peak_attn_elements=peak_attention_elements(rows),
        flops_predicted=predict_prefill_flops(rows, cfg.model.dim, cfg.model.vocab, final_rows),
    )
    return rows, cell


def _check_budget(cfg: BenchConfig, rows: list[int], cell: BenchCell) -> bool:
    """Mark the cell oom and return False when it would not fit."""
    if cfg.mem_budget_bytes is not None:
        if _predicted_footprint_bytes(cfg, rows) > cfg.mem_budget_bytes:
            cell.status = "oom"
            return False
    return True


def _require_positive_median(samples: list[float]) -> float:
    med = statistics.median(samples)
    if med <= 0:
        raise InvariantViolation(f"non-positive median timing {med}")
    return med


# ---------------------------------------------------------------------------
# Benchmarks
# ---------------------------------------------------------------------------


def run_prefill_bench(cfg: BenchConfig) -> BenchReport:
    """Wall-clock prefill medians per (variant, length) plus KV accounting."""
    cells = []
    for variant in cfg.variants:
        model = _variant_model(cfg, variant)
        for length in cfg.context_lengths:
            rows, cell = _cell_prediction(cfg, variant, length)
            if not _check_budget(cfg, rows, cell):
                cells.append(cell)
                continue
            seq = _cell_sequence(cfg, length)
            times = []
            result = None
            for rep in range(cfg.warmup + cfg.repeats):
                t0 = time.perf_counter()
                result = prefill(model, seq)
                t1 = time.perf_counter()
                if rep >= cfg.warmup:
                    times.append(t1 - t0)
            cell.prefill_seconds = _require_positive_median(times)
            cell.kv_bytes_measured = kv_bytes(result.cache, cfg.bytes_per_elem)
            if cell.kv_bytes_measured != cell.kv_bytes_predicted:
                raise InvariantViolation(
                    f"kv bytes mismatch at ({variant.name}, {length}): "
                    f"measured {cell.kv_bytes_measured}, predicted {cell.kv_bytes_predicted}"
                )
            cell.output_digest = _digest(result.logits, result.kept_pos)
            cells.append(cell)
    return BenchReport("prefill", cells, _metadata(bench_config_to_dict(cfg), cfg.seed))


def run_decode_bench(cfg: BenchConfig) -> BenchReport:
    """Greedy decode throughput (tokens per second) after a prefill."""
    if cfg.decode_steps < 1:
        raise ConfigError(f"decode_steps must be >= 1, got {cfg.decode_steps}")
    cells = []
    for variant in cfg.variants:
        model = _variant_model(cfg, variant)
        for length in cfg.context_lengths:
            rows, cell = _cell_prediction(cfg, variant, length)
            if not _check_budget(cfg, rows, cell):
                cells.append(cell)
                continue
            seq = _cell_sequence(cfg, length)
            result = prefill(model, seq)
            cell.kv_bytes_measured = kv_bytes(result.cache, cfg.bytes_per_elem)
            if cell.kv_bytes_measured != cell.kv_bytes_predicted:
                raise InvariantViolation(
                    f"kv bytes mismatch at ({variant.name}, {length})"
                )
            first_ids = generate_greedy(model, result, 2)  # decode warmup
            samples = []
            for _ in range(cfg.repeats):
                t0 = time.perf_counter()
                generate_greedy(model, result, cfg.decode_steps)
                t1 = time.perf_counter()
                samples.append(cfg.decode_steps / (t1 - t0))
            cell.decode_tps = _require_positive_median(samples)
            cell.output_digest = _digest(result.logits, np.asarray(first_ids))
            cells.append(cell)
    return BenchReport("decode", cells, _metadata(bench_config_to_dict(cfg), cfg.seed))


def run_train_step_bench(cfg: BenchConfig) -> BenchReport:
    """Proxy training step: one prefill forward, one alignment gradient on a
    fixed speech/transcript pair, one adapter application."""
    dim = cfg.model.dim
    speech = synth_sequence([("speech", 96)], dim, seed=cfg.seed * 7 + 5).embed
    transcript = synth_sequence([("text", 40)], dim, seed=cfg.seed * 7 + 6).embed
    adapter = new_adapter(dim, dim, rank=min(8, dim), seed=cfg.seed * 7 + 7)
    w = np.random.default_rng(cfg.seed * 7 + 8).normal(0.0, 0.02, size=(dim, dim))
    align_cfg = AlignConfig()
    cells = []
    for variant in cfg.variants:
        model = _variant_model(cfg, variant)
        for length in cfg.context_lengths:
            rows, cell = _cell_prediction(cfg, variant, length)
            if not _check_budget(cfg, rows, cell):
                cells.append(cell)
                continue
            seq = _cell_sequence(cfg, length)
            probe_rows = seq.embed[: min(len(seq), 256)]
            times = []
            result = None
            for rep in range(cfg.warmup + cfg.repeats):
                t0 = time.perf_counter()
                result = prefill(model, seq)
                alignment_grad(speech, transcript, align_cfg)
                apply_rows(adapter, w, probe_rows)
                t1 = time.perf_counter()
                if rep >= cfg.warmup:
                    times.append(t1 - t0)
            cell.train_step_seconds = _require_positive_median(times)
            cell.kv_bytes_measured = kv_bytes(result.cache, cfg.bytes_per_elem)
            if cell.kv_bytes_measured != cell.kv_bytes_predicted:
                raise InvariantViolation(
                    f"kv bytes mismatch at ({variant.name}, {length})"
                )
            cell.output_digest = _digest(result.logits, result.kept_pos)
            cells.append(cell)
    return BenchReport("train", cells, _metadata(bench_config_to_dict(cfg), cfg.seed))


# ---------------------------------------------------------------------------
# Needle retrieval grid
# ---------------------------------------------------------------------------


@dataclass
class NeedleBenchConfig:
    model: ModelConfig
    chunk: ChunkConfig = field(default_factory=ChunkConfig)
    durations_s: tuple[float, ...] = (60.0, 120.0, 180.0, 240.0, 300.0)
    offsets_frac: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9)
    needle_len_s: float = 4.0
    strength: float = 3.0
    query_tokens: int = 16
    seed: int = 0
    bins: int = 24

    def __post_init__(self):
        if self.model.extractor is None:
            raise ConfigError("needle runs need a model with an extractor")
        if self.query_tokens < 1:
            raise ConfigError("needle runs need at least one query token")
        for frac in self.offsets_frac:
            if not (0.0 <= frac <= 1.0):
                raise ConfigError(f"offset fraction {frac} outside [0, 1]")
        for dur in self.durations_s:
            if dur <= self.needle_len_s:
                raise ConfigError(
                    f"duration {dur}s cannot hold a {self.needle_len_s}s needle"
                )


def default_needle_config(strength: float = 3.0, seed: int = 0) -> NeedleBenchConfig:
    model = replace(default_model_config(), extractor=ExtractorConfig(4, 0.7))
    return NeedleBenchConfig(model=model, strength=strength, seed=seed)


def needle_config_from_dict(d: dict) -> NeedleBenchConfig:
    base = default_needle_config()
    model = model_config_from_dict(d.get("model", {}))
    ext = _extractor_from_dict(d.get("extractor", {"blocks": 4, "keep_ratio": 0.7}))
    return NeedleBenchConfig(
        model=replace(model, extractor=ext),
        chunk=ChunkConfig(**d.get("chunk", {})),
        durations_s=tuple(float(x) for x in d.get("durations_s", base.durations_s)),
        offsets_frac=tuple(float(x) for x in d.get("offsets_frac", base.offsets_frac)),
        needle_len_s=float(d.get("needle_len_s", base.needle_len_s)),
        strength=float(d.get("strength", base.strength)),
        query_tokens=int(d.get("query_tokens", base.query_tokens)),
        seed=int(d.get("seed", base.seed)),
        bins=int(d.get("bins", base.bins)),
    )


@dataclass
class NeedleCell:
    duration_s: float
    offset_s: float
    offset_frac: float
    needle_tokens: int
    survived: int
    survival_frac: float
    verdict: bool
    block_overlaps: list[int]
    peak_pos: int          # compressed-token coordinate of the score peak
    needle_center: int     # compressed-token coordinate of the needle middle
    score_map: list[float]

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class NeedleReport:
    cells: list[NeedleCell]
    metadata: dict

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "needle",
            "metadata": self.metadata,
            "cells": [c.to_dict() for c in self.cells],
        }

    def verdict_fraction(self) -> float:
        return sum(c.verdict for c in self.cells) / len(self.cells)

    def mean_survival(self) -> float:
        return float(np.mean([c.survival_frac for c in self.cells]))


def _needle_cell_config(cfg: NeedleBenchConfig) -> dict:
    return {
        "model": model_config_to_dict(cfg.model),
        "extractor": _extractor_to_dict(cfg.model.extractor),
        "chunk": {
            "window_frames": cfg.chunk.window_frames,
            "pool_factor": cfg.chunk.pool_factor,
            "frames_per_second": cfg.chunk.frames_per_second,
        },
        "durations_s": list(cfg.durations_s),
        "offsets_frac": list(cfg.offsets_frac),
        "needle_len_s": cfg.needle_len_s,
        "strength": cfg.strength,
        "query_tokens": cfg.query_tokens,
        "seed": cfg.seed,
        "bins": cfg.bins,
    }


def run_needle(cfg: NeedleBenchConfig) -> NeedleReport:
    """Plant one needle per (duration, offset) cell and measure how much of
    it survives every pruning block, plus where the retained relevance mass
    sits along the stream."""
    model = init_model(cfg.model)
    cells = []
    for i, duration in enumerate(cfg.durations_s):
        for j, frac in enumerate(cfg.offsets_frac):
            offset_s = frac * (duration - cfg.needle_len_s)
            spec = HaystackSpec(
                duration_s=duration,
                needle_offset_s=offset_s,
                needle_len_s=cfg.needle_len_s,
                strength=cfg.strength,
                seed=cfg.seed * 10_007 + i * 101 + j,
                dim=cfg.model.dim,
                chunk=cfg.chunk,
                query_tokens=cfg.query_tokens,
            )
            seq, span = build_haystack_sequence(spec)
            result = prefill(model, seq, needle_span=span)
            if not result.trace.blocks:
                raise InvariantViolation("needle run produced no pruning blocks")
            needle_tokens = span[1] - span[0]
            overlaps = [b.needle_overlap for b in result.trace.blocks]
            survived = overlaps[-1]
            frac_surv = survived / needle_tokens
            last = result.trace.blocks[-1]
            speech_len = len(seq) - cfg.query_tokens
            score_map, peak_pos = _retained_score_map(
                last, cfg.query_tokens, speech_len, cfg.bins
            )
            cells.append(
                NeedleCell(
                    duration_s=duration,
                    offset_s=offset_s,
                    offset_frac=frac,
                    needle_tokens=needle_tokens,
                    survived=survived,
                    survival_frac=frac_surv,
                    verdict=frac_surv >= 0.5,
                    block_overlaps=overlaps,
                    peak_pos=peak_pos,
                    needle_center=(span[0] + span[1]) // 2 - cfg.query_tokens,
                    score_map=score_map,
                )
            )
    meta = _metadata(_needle_cell_config(cfg), cfg.seed)
    return NeedleReport(cells=cells, metadata=meta)


def _retained_score_map(block, text_offset: int, speech_len: int, bins: int):
    """Sum the final block's relevance scores of surviving non-text tokens
    into position bins; returns (map, peak position in speech coordinates)."""
    kept = set(int(p) for p in block.kept_pos)
    edges = np.linspace(0, speech_len, bins + 1)
    acc = np.zeros(bins)
    for pos, score in zip(block.cand_pos, block.scores):
        if int(pos) not in kept:
            continue
        local = int(pos) - text_offset
        b = min(int(np.searchsorted(edges, local, side="right")) - 1, bins - 1)
        acc[max(b, 0)] += score
    peak_bin = int(np.argmax(acc))
    peak_pos = int(round((edges[peak_bin] + edges[peak_bin + 1]) / 2))
    return [float(x) for x in acc], peak_pos


# ---------------------------------------------------------------------------
# Report writers
# ---------------------------------------------------------------------------

_METRIC_FIELDS = {
    "prefill": [("prefill_s", "prefill_seconds")],
    "decode": [("decode_tps", "decode_tps")],
    "train": [("train_step_s", "train_step_seconds")],
}


def _baseline_value(report: BenchReport, length: int, attr: str):
    for c in report.cells:
        if c.length == length and c.variant == report.cells[0].variant:
            return getattr(c, attr)
    return None


def bench_csv_rows(report: BenchReport) -> list[list]:
    rows = [["variant", "length", "metric", "value", "predicted", "ratio_vs_baseline"]]
    for c in report.cells:
        rows.append([c.variant, c.length, "status", c.status, "", ""])
        if c.status != "ok":
            continue
        for metric, attr in _METRIC_FIELDS[report.kind]:
            val = getattr(c, attr)
            base = _baseline_value(report, c.length, attr)
            ratio = "" if not base else f"{val / base:.4f}"
            rows.append([c.variant, c.length, metric, f"{val:.6g}", "", ratio])
        base_kv = _baseline_value(report, c.length, "kv_bytes_measured")
        kv_ratio = "" if not base_kv else f"{c.kv_bytes_measured / base_kv:.4f}"
        rows.append(
            [c.variant, c.length, "kv_bytes", c.kv_bytes_measured, c.kv_bytes_predicted, kv_ratio]
        )
        rows.append(
            [c.variant, c.length, "flops", c.flops_predicted, c.flops_predicted, ""]
        )
        rows.append(
            [c.variant, c.length, "peak_attn_elems", c.peak_attn_elements, c.peak_attn_elements, ""]
        )
    return rows


def write_bench_report(report: BenchReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{report.kind}.json").write_text(
        json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    import csv

    with open(out / f"{report.kind}.csv", "w", newline="") as fh:
        csv.writer(fh).writerows(bench_csv_rows(report))
    lines = [f"{report.kind} benchmark  (schema {SCHEMA_VERSION})"]
    lines.append(f"config {report.metadata['config_hash']}  seed {report.metadata['seed']}")
    lines.append("")
    header = f"{'variant':<16} {'length':>8} {'metric':>14} {'value':>14} {'vs base':>8}"
    lines.append(header)
    lines.append("-" * len(header))
    for row in bench_csv_rows(report)[1:]:
        variant, length, metric, value, _, ratio = row
        if metric == "status" and value == "ok":
            continue
        lines.append(f"{variant:<16} {length:>8} {metric:>14} {value!s:>14} {ratio:>8}")
    (out / f"{report.kind}_summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_needle_report(report: NeedleReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "needle.json").write_text(
        json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    import csv

    with open(out / "needle.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["duration_s", "offset_s", "needle_tokens", "survived",
             "survival_frac", "verdict", "peak_pos", "needle_center"]
        )
        for c in report.cells:
            w.writerow(
                [c.duration_s, f"{c.offset_s:.1f}", c.needle_tokens, c.survived,
                 f"{c.survival_frac:.3f}", int(c.verdict), c.peak_pos, c.needle_center]
            )
    durations = sorted({c.duration_s for c in report.cells})
    offsets = sorted({c.offset_frac for c in report.cells})
    lines = ["needle retrieval grid (survival fraction, * = verdict positive)", ""]
    by_key = {(c.duration_s, c.offset_frac): c for c in report.cells}
    lines.append("duration_s " + " ".join(f"{o:>8.2f}" for o in offsets))
    for d in durations:
        row = [f"{d:>10.0f}"]
        for o in offsets:
            c = by_key.get((d, o))
            row.append("     -- " if c is None else f"{c.survival_frac:>7.2f}{'*' if c.verdict else ' '}")
        lines.append(" ".join(row))
    lines.append("")
    lines.append(f"verdict fraction: {report.verdict_fraction():.3f}")
    lines.append(f"mean survival:    {report.mean_survival():.3f}")
    (out / "needle_summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
