import math

import numpy as np
import pytest

from tinymm.errors import ConfigError, FormatError, ParameterError
from tinymm.longaudio import (
    ChunkConfig,
    HaystackNeedle,
    HaystackSpec,
    SpeechStream,
    build_haystack_sequence,
    chunk_and_compress,
    compress_span,
    compressed_length,
    derive_query_vec,
    export_haystack,
    load_haystack_spec,
    make_haystack,
    valid_compressed_length,
)
from tinymm.modality import load_manifest, read_manifest


def _stream(T, dim=4, seed=0, fps=50):
    frames = np.random.default_rng(seed).standard_normal((T, dim))
    return SpeechStream(frames=frames, frames_per_second=fps)


class TestChunkConfig:
    def test_defaults_match_encoder_arithmetic(self):
        cfg = ChunkConfig()
        assert cfg.window_frames == 1500
        assert cfg.tokens_per_window == 300
        assert cfg.frames_per_second == 50

    def test_divisibility_enforced(self):
        with pytest.raises(ConfigError):
            ChunkConfig(window_frames=1000, pool_factor=3)


class TestChunkAndCompress:
    def test_thirty_seconds_is_300_tokens(self):
        # one 30 s window at 50 frames/s: 1500 frames -> 300 tokens
        toks = chunk_and_compress(_stream(1500), ChunkConfig())
        assert len(toks) == 300
        assert set(toks.tags) == {"speech"}

    def test_two_hours_is_72000_tokens(self):
        # 7200 s at 50 frames/s: 360,000 raw frames, 240 windows x 300
        cfg = ChunkConfig()
        T = 7200 * cfg.frames_per_second
        assert T == 360_000
        assert compressed_length(T, cfg) == 72_000

    def test_constant_frames_pool_to_constant(self):
        cfg = ChunkConfig(window_frames=20, pool_factor=4)
        frames = np.full((40, 3), 2.5)
        toks = chunk_and_compress(SpeechStream(frames=frames), cfg)
        np.testing.assert_array_equal(toks.embed, np.full((10, 3), 2.5))

    def test_length_law_random_durations(self):
        cfg = ChunkConfig(window_frames=60, pool_factor=6)
        rng = np.random.default_rng(1)
        for _ in range(50):
            T = int(rng.integers(1, 1000))
            toks = chunk_and_compress(_stream(T, dim=2), cfg)
            assert len(toks) == math.ceil(T / 60) * 10

    def test_mean_pool_linearity(self):
        # frames are multiples of the pool factor so every sum and division
        # is exactly representable and linearity holds bit for bit
        cfg = ChunkConfig(window_frames=30, pool_factor=5)
        rng = np.random.default_rng(2)
        fa = 5.0 * rng.integers(-8, 9, size=(73, 3)).astype(np.float64)
        fb = 5.0 * rng.integers(-8, 9, size=(73, 3)).astype(np.float64)
        a = SpeechStream(frames=fa)
        b = SpeechStream(frames=fb)
        combo = SpeechStream(frames=2.0 * fa + 0.5 * fb)
        lhs = chunk_and_compress(combo, cfg).embed
        rhs = (
            2.0 * chunk_and_compress(a, cfg).embed + 0.5 * chunk_and_compress(b, cfg).embed
        )
        np.testing.assert_array_equal(lhs, rhs)
        # and for arbitrary inputs it holds to roundoff
        x = _stream(73, dim=3, seed=4)
        y = _stream(73, dim=3, seed=5)
        mixed = SpeechStream(frames=1.5 * x.frames - 0.25 * y.frames)
        np.testing.assert_allclose(
            chunk_and_compress(mixed, cfg).embed,
            1.5 * chunk_and_compress(x, cfg).embed - 0.25 * chunk_and_compress(y, cfg).embed,
            atol=1e-12,
        )

    def test_last_window_zero_padded(self):
        cfg = ChunkConfig(window_frames=10, pool_factor=5)
        toks = chunk_and_compress(_stream(11, dim=2), cfg)
        assert len(toks) == 4
        assert valid_compressed_length(11, cfg) == 3
        np.testing.assert_array_equal(toks.embed[3], np.zeros(2))  # pure padding


class TestCompressSpan:
    def test_floor_divide_endpoints(self):
        cfg = ChunkConfig(window_frames=20, pool_factor=5)
        assert compress_span((225_000, 226_000), cfg) == (45_000, 45_200)

    def test_unmapping_covers_original(self):
        cfg = ChunkConfig(window_frames=20, pool_factor=5)
        rng = np.random.default_rng(4)
        for _ in range(50):
            a = int(rng.integers(0, 1000))
            b = a + int(rng.integers(1, 200))
            ca, cb = compress_span((a, b), cfg)
            assert abs(ca * 5 - a) < 5
            assert abs(cb * 5 - b) < 5
            assert cb > ca


class TestMakeHaystack:
    def _needle(self, dim=4, offset=2.0, length=1.0, strength=3.0, seed=9):
        q = np.random.default_rng(seed).standard_normal(dim)
        return HaystackNeedle(offset_s=offset, len_s=length, query_vec=q, strength=strength)

    def test_offset_maps_to_frame_start(self):
        cfg = ChunkConfig()
        stream = make_haystack(6000.0, self._needle(offset=4500.0, length=2.0), cfg, 4, seed=0)
        assert stream.needle_span[0] == 225_000

    def test_deterministic(self):
        cfg = ChunkConfig(window_frames=100, pool_factor=5)
        a = make_haystack(10.0, self._needle(), cfg, 4, seed=5)
        b = make_haystack(10.0, self._needle(), cfg, 4, seed=5)
        assert np.array_equal(a.frames, b.frames)

    def test_zero_strength_statistically_invisible(self):
        cfg = ChunkConfig(window_frames=100, pool_factor=5)
        dim = 8
        needle = self._needle(dim=dim, offset=1.0, length=20.0, strength=0.0)
        stream = make_haystack(40.0, needle, cfg, dim, seed=6)
        qhat = needle.query_vec / np.linalg.norm(needle.query_vec)
        a, b = stream.needle_span
        dots = stream.frames[a:b] @ qhat
        assert abs(dots.mean()) <= 3.0 / np.sqrt(b - a)

    def test_needle_must_fit(self):
        with pytest.raises(ParameterError):
            make_haystack(5.0, self._needle(offset=4.5, length=1.0), ChunkConfig(), 4, seed=0)


class TestHaystackSpecFile:
    def _spec_doc(self):
        return {
            "duration_s": 12.0,
            "needle": {"offset_s": 4.0, "len_s": 2.0, "strength": 3.0},
            "seed": 11,
            "dim": 8,
            "chunk": {"window_frames": 100, "pool_factor": 5, "frames_per_second": 50},
            "query_tokens": 4,
        }

    def test_load_and_export_round_trip(self, tmp_path):
        import json

        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(self._spec_doc()))
        spec = load_haystack_spec(spec_path)
        assert spec.duration_s == 12.0
        manifest_path = export_haystack(spec, tmp_path / "out")
        seq = load_manifest(manifest_path)
        # 12 s * 50 fps = 600 frames -> 6 windows x 20 tokens + 4 query tokens
        assert len(seq) == 4 + 120
        assert seq.tags[:4] == ("text",) * 4
        m = read_manifest(manifest_path)
        # needle frames [200, 300) -> tokens [40, 60) -> shifted by 4
        assert m.needle_span == (44, 20)

    def test_missing_field_rejected(self, tmp_path):
        import json

        doc = self._spec_doc()
        del doc["needle"]["len_s"]
        p = tmp_path / "bad.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(FormatError, match="len_s"):
            load_haystack_spec(p)

    def test_sequence_matches_export(self, tmp_path):
        import json

        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(self._spec_doc()))
        spec = load_haystack_spec(spec_path)
        seq, span = build_haystack_sequence(spec)
        manifest_path = export_haystack(spec, tmp_path / "out")
        loaded = load_manifest(manifest_path)
        assert np.array_equal(loaded.embed, seq.embed)
        assert loaded.tags == seq.tags
        assert read_manifest(manifest_path).needle_span == (span[0], span[1] - span[0])

    def test_query_direction_shared_between_needle_and_text(self, tmp_path):
        spec = HaystackSpec(
            duration_s=10.0, needle_offset_s=2.0, needle_len_s=2.0, strength=4.0,
            seed=3, dim=8, chunk=ChunkConfig(window_frames=100, pool_factor=5),
            query_tokens=4,
        )
        seq, span = build_haystack_sequence(spec)
        q = derive_query_vec(spec.seed, spec.dim)
        text_dots = seq.embed[:4] @ q
        needle_dots = seq.embed[span[0] : span[1]] @ q
        assert np.all(text_dots > 1.0)
        assert needle_dots.mean() > 2.0
