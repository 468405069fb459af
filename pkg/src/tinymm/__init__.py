"""tinymm: a desk-scale multi-modal decoder with measurable efficiency tricks.

The library implements, on top of plain numpy:

- a deterministic toy decoder-only transformer with a per-layer KV cache
- attention-guided block-wise pruning of non-text tokens (extractor)
- per-modality-combination low-rank adapters on the attention projections
- a DTW-accumulated speech/transcript alignment loss with exact gradient
- long-audio chunking and mean-pool compression plus a needle generator
- CTC loss, greedy unit decoding, and repeat collapsing for streaming units
- a benchmark harness measuring prefill time, decode throughput, KV bytes,
  and train-step time for baseline vs. pruned variants
"""

from .adapters import Adapter, AdapterSet, apply, apply_rows, merge, new_adapter
from .alignment import (
    AlignConfig,
    AlignmentCost,
    alignment_grad,
    alignment_loss,
    dist_matrix,
    dtw_accumulate,
    total_loss,
)
from .ctc import (
    BLANK,
    FramePosteriors,
    UnitSequence,
    collapse_units,
    ctc_loss,
    greedy_decode,
    upsample,
)
from .errors import ConfigError, FormatError, ParameterError, ShapeError
from .extractor import (
    ExtractorConfig,
    PruneTrace,
    block_input_lengths,
    prune,
    relevance_scores,
    retention_schedule,
)
from .longaudio import (
    ChunkConfig,
    HaystackNeedle,
    HaystackSpec,
    SpeechStream,
    chunk_and_compress,
    compress_span,
    compressed_length,
    make_haystack,
)
from .modality import (
    MODALITIES,
    Manifest,
    Needle,
    TokenSequence,
    load_manifest,
    modality_key,
    save_manifest,
    synth_sequence,
)
from .model import (
    KvCache,
    Model,
    ModelConfig,
    PrefillResult,
    decode_step,
    generate_greedy,
    init_model,
    kv_bytes,
    prefill,
)
from .numerics import finite_diff_grad, matmul, softmax_row

__version__ = "0.1.0"
