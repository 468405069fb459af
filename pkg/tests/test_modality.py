import numpy as np
import pytest
from hypothesis import given, strategies as st

from tinymm.errors import FormatError, ParameterError
from tinymm.modality import (
    MODALITIES,
    Needle,
    TokenSequence,
    concat,
    load_manifest,
    modality_key,
    query_embeddings,
    read_manifest,
    save_manifest,
    synth_sequence,
    write_embeddings,
)


def test_sequence_validation():
    with pytest.raises(ParameterError):
        TokenSequence(np.zeros((2, 3)), ("text", "bogus"), np.arange(2))
    with pytest.raises(ParameterError):
        TokenSequence(np.zeros((2, 3)), ("text", "text"), np.array([1, 1]))


class TestSynthSequence:
    def test_deterministic(self):
        spec = dict(runs=[("text", 3), ("speech", 20)], dim=8, seed=42)
        a = synth_sequence(**spec)
        b = synth_sequence(**spec)
        assert np.array_equal(a.embed, b.embed)
        assert a.tags == b.tags

    def test_tag_expansion(self):
        seq = synth_sequence([("text", 3), ("image", 5)], dim=4, seed=0)
        assert len(seq) == 8
        assert seq.tags == ("text",) * 3 + ("image",) * 5
        assert np.array_equal(seq.orig_pos, np.arange(8))

    def test_empty_runs_valid(self):
        seq = synth_sequence([], dim=4, seed=0)
        assert len(seq) == 0

    def test_needle_out_of_range(self):
        with pytest.raises(ParameterError):
            synth_sequence(
                [("speech", 10)], dim=4, seed=0,
                needle=Needle(start=8, length=5, query_vec=np.ones(4), strength=1.0),
            )

    def test_zero_strength_statistically_invisible(self):
        # Monte Carlo oracle: with strength 0, needle-token dot products with
        # the unit query are N(0, 1) samples; their mean over 1000 tokens must
        # sit within 3 standard errors of zero.
        dim = 16
        q = np.random.default_rng(9).standard_normal(dim)
        qhat = q / np.linalg.norm(q)
        seq = synth_sequence(
            [("speech", 2000)], dim=dim, seed=123,
            needle=Needle(start=500, length=1000, query_vec=q, strength=0.0),
        )
        dots = seq.embed[500:1500] @ qhat
        assert abs(dots.mean()) <= 3.0 / np.sqrt(1000)

    def test_positive_strength_shifts_dots(self):
        dim = 16
        q = np.random.default_rng(9).standard_normal(dim)
        qhat = q / np.linalg.norm(q)
        seq = synth_sequence(
            [("speech", 1000)], dim=dim, seed=123,
            needle=Needle(start=100, length=200, query_vec=q, strength=3.0),
        )
        dots = seq.embed[100:300] @ qhat
        assert dots.mean() > 2.0  # centered on 3.0


class TestModalityKey:
    def test_sort_and_dedup(self):
        assert modality_key(("text", "image", "text")) == "image+text"

    def test_single(self):
        assert modality_key(("speech",)) == "speech"

    def test_lexicographic(self):
        assert modality_key(("video", "text", "speech")) == "speech+text+video"

    def test_permutation_invariant(self):
        rng = np.random.default_rng(0)
        tags = ["text", "image", "speech", "image", "text"]
        for _ in range(5):
            rng.shuffle(tags)
            assert modality_key(tuple(tags)) == "image+speech+text"

    @given(st.lists(st.sampled_from(MODALITIES), min_size=0, max_size=8))
    def test_matches_sorted_set(self, tags):
        assert modality_key(tuple(tags)) == "+".join(sorted(set(tags)))


class TestManifestIO:
    def test_round_trip(self, tmp_path):
        seq = synth_sequence([("text", 3), ("speech", 9), ("image", 2)], dim=6, seed=7)
        path = tmp_path / "sample.manifest.json"
        save_manifest(seq, path, needle_span=(5, 4))
        loaded = load_manifest(path)
        assert np.array_equal(loaded.embed, seq.embed)  # bit-identical
        assert loaded.tags == seq.tags
        assert np.array_equal(loaded.orig_pos, seq.orig_pos)
        assert read_manifest(path).needle_span == (5, 4)

    def test_expansion_from_runs(self, tmp_path):
        seq = synth_sequence([("text", 3), ("image", 5)], dim=4, seed=1)
        path = tmp_path / "m.json"
        save_manifest(seq, path)
        loaded = load_manifest(path)
        assert loaded.tags == ("text",) * 3 + ("image",) * 5

    def test_empty_sequence_round_trips(self, tmp_path):
        seq = synth_sequence([], dim=4, seed=1)
        path = tmp_path / "empty.json"
        save_manifest(seq, path)
        assert len(load_manifest(path)) == 0

    def test_length_mismatch_rejected(self, tmp_path):
        seq = synth_sequence([("text", 10)], dim=4, seed=1)
        path = tmp_path / "m.json"
        save_manifest(seq, path)
        # shrink the blob to 9 rows
        blob = tmp_path / "m.f32"
        blob.write_bytes(blob.read_bytes()[: 9 * 4 * 4])
        with pytest.raises(FormatError, match="9 rows"):
            load_manifest(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FormatError, match="not found"):
            load_manifest(tmp_path / "absent.json")

    def test_unknown_tag_named_in_error(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(
            '{"dim": 2, "runs": [{"tag": "smell", "len": 1}], "embedding_path": "x.f32"}'
        )
        with pytest.raises(FormatError, match="smell"):
            load_manifest(path)

    def test_needle_span_must_fit_one_run(self, tmp_path):
        seq = synth_sequence([("text", 4), ("speech", 4)], dim=2, seed=0)
        with pytest.raises(FormatError, match="needle_span"):
            save_manifest(seq, tmp_path / "m.json", needle_span=(2, 4))

    def test_save_requires_contiguous_positions(self, tmp_path):
        seq = synth_sequence([("text", 4)], dim=2, seed=0).take(np.array([0, 2, 3]))
        with pytest.raises(ParameterError):
            save_manifest(seq, tmp_path / "m.json")

    def test_blob_is_float32_little_endian(self, tmp_path):
        seq = synth_sequence([("text", 2)], dim=3, seed=5)
        save_manifest(seq, tmp_path / "m.json")
        raw = (tmp_path / "m.f32").read_bytes()
        assert len(raw) == 2 * 3 * 4
        assert np.array_equal(
            np.frombuffer(raw, dtype="<f4").reshape(2, 3).astype(np.float64), seq.embed
        )


def test_concat_shifts_positions():
    a = synth_sequence([("text", 3)], dim=4, seed=0)
    b = synth_sequence([("speech", 2)], dim=4, seed=1)
    c = concat(a, b)
    assert np.array_equal(c.orig_pos, np.arange(5))
    assert c.tags == ("text",) * 3 + ("speech",) * 2


def test_query_embeddings_carry_query_direction():
    q = np.random.default_rng(2).standard_normal(8)
    rows = query_embeddings(16, 8, q, seed=3)
    qhat = q / np.linalg.norm(q)
    dots = rows @ qhat
    assert np.all(dots > 2.0)  # sqrt(8) ~ 2.83 minus small jitter
