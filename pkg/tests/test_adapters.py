import numpy as np
import pytest

from tinymm.adapters import (
    Adapter,
    AdapterSet,
    apply,
    apply_rows,
    load_adapter,
    merge,
    new_adapter,
    save_adapter,
)
from tinymm.errors import ParameterError, ShapeError


class TestApply:
    def test_zero_b_is_exact_noop(self):
        ad = new_adapter(d_in=4, d_out=4, rank=2, seed=0)
        w = np.random.default_rng(1).standard_normal((4, 4))
        x = np.random.default_rng(2).standard_normal((4, 6))
        assert np.array_equal(apply(ad, w, x), w @ x)

    def test_worked_example(self):
        # (scale*BA + W) = [[2,0],[0,1]]; times [1,2]^T -> [2,2]^T
        ad = Adapter(a=np.array([[1.0, 0.0]]), b=np.array([[1.0], [0.0]]), scale=1.0)
        w = np.eye(2)
        x = np.array([[1.0], [2.0]])
        np.testing.assert_allclose(apply(ad, w, x), [[2.0], [2.0]], atol=1e-15)

    def test_factored_equals_dense_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            ad = Adapter(
                a=rng.standard_normal((2, 5)),
                b=rng.standard_normal((3, 2)),
                scale=float(rng.uniform(0.25, 2.0)),
            )
            w = rng.standard_normal((3, 5))
            x = rng.standard_normal((5, 4))
            dense = (ad.scale * ad.b @ ad.a + w) @ x
            np.testing.assert_allclose(apply(ad, w, x), dense, rtol=1e-10)

    def test_linearity(self):
        rng = np.random.default_rng(8)
        ad = Adapter(a=rng.standard_normal((2, 4)), b=rng.standard_normal((4, 2)), scale=1.3)
        w = rng.standard_normal((4, 4))
        x1, x2 = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
        np.testing.assert_allclose(
            apply(ad, w, x1 + x2), apply(ad, w, x1) + apply(ad, w, x2), rtol=1e-9, atol=1e-12
        )

    def test_rank_bound(self):
        rng = np.random.default_rng(9)
        ad = Adapter(a=rng.standard_normal((2, 6)), b=rng.standard_normal((6, 2)), scale=0.8)
        sv = np.linalg.svd(ad.scale * ad.b @ ad.a, compute_uv=False)
        assert int(np.sum(sv > 1e-9)) <= ad.rank

    def test_shape_mismatch(self):
        ad = new_adapter(4, 4, 2, seed=0)
        with pytest.raises(ShapeError):
            apply(ad, np.ones((3, 4)), np.ones((4, 2)))
        with pytest.raises(ShapeError):
            apply(ad, np.ones((4, 4)), np.ones((3, 2)))

    def test_apply_rows_consistent_with_apply(self):
        rng = np.random.default_rng(10)
        ad = Adapter(a=rng.standard_normal((2, 5)), b=rng.standard_normal((3, 2)), scale=0.7)
        w = rng.standard_normal((3, 5))
        x = rng.standard_normal((5, 6))
        np.testing.assert_allclose(apply_rows(ad, w, x.T), apply(ad, w, x).T, rtol=1e-12)
        np.testing.assert_allclose(apply_rows(None, w, x.T), (w @ x).T, rtol=1e-12)


class TestMerge:
    def test_zero_b_keeps_w(self):
        ad = new_adapter(3, 3, 1, seed=1)
        w = np.random.default_rng(0).standard_normal((3, 3))
        assert np.array_equal(merge(ad, w), w)

    def test_merged_forward_matches_unmerged(self):
        rng = np.random.default_rng(11)
        ad = Adapter(a=rng.standard_normal((2, 4)), b=rng.standard_normal((4, 2)), scale=1.5)
        w = rng.standard_normal((4, 4))
        x = rng.standard_normal((4, 5))
        merged = merge(ad, w)
        zero = new_adapter(4, 4, 2, seed=5)
        np.testing.assert_allclose(apply(zero, merged, x), apply(ad, w, x), rtol=1e-10)

    def test_merge_twice_adds_twice(self):
        rng = np.random.default_rng(12)
        ad = Adapter(a=rng.standard_normal((1, 3)), b=rng.standard_normal((3, 1)), scale=1.0)
        w = rng.standard_normal((3, 3))
        once = merge(ad, w)
        twice = merge(ad, once)
        np.testing.assert_allclose(twice - once, once - w, rtol=1e-12)
        assert not np.allclose(twice, once)


class TestAdapterConstruction:
    def test_rank_limits(self):
        with pytest.raises(ParameterError):
            new_adapter(4, 4, 0, seed=0)
        with pytest.raises(ParameterError):
            new_adapter(4, 4, 5, seed=0)

    def test_fresh_adapter_b_zero(self):
        ad = new_adapter(6, 5, 2, seed=3)
        assert np.array_equal(ad.b, np.zeros((5, 2)))
        assert ad.scale == 1.0

    def test_alpha_scaling(self):
        ad = new_adapter(6, 5, 2, seed=3, alpha=8.0)
        assert ad.scale == 4.0


class TestAdapterSet:
    def test_select_exact_key(self):
        s = AdapterSet()
        ad = new_adapter(4, 4, 2, seed=0)
        s.add("layer0.q", "image+text", ad)
        assert s.select("layer0.q", "image+text") is ad
        assert s.select("layer0.q", "speech+text") is None
        assert s.select("layer1.q", "image+text") is None

    def test_noncanonical_key_rejected(self):
        s = AdapterSet()
        with pytest.raises(ParameterError):
            s.select("layer0.q", "text+image")
        with pytest.raises(ParameterError):
            s.add("layer0.q", "text+text", new_adapter(4, 4, 2, seed=0))

    def test_duplicate_rejected(self):
        s = AdapterSet()
        s.add("layer0.q", "speech", new_adapter(4, 4, 2, seed=0))
        with pytest.raises(ParameterError):
            s.add("layer0.q", "speech", new_adapter(4, 4, 2, seed=1))


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(13)
        ad = Adapter(a=rng.standard_normal((2, 6)), b=rng.standard_normal((4, 2)), scale=0.5)
        path = tmp_path / "ad.bin"
        save_adapter(path, "layer2.v", "speech+text", ad)
        site, key, loaded = load_adapter(path)
        assert (site, key) == ("layer2.v", "speech+text")
        assert loaded.scale == 0.5
        # values survive the float32 container exactly
        np.testing.assert_array_equal(loaded.a, ad.a.astype("<f4").astype(np.float64))
        np.testing.assert_array_equal(loaded.b, ad.b.astype("<f4").astype(np.float64))

    def test_truncated_body_rejected(self, tmp_path):
        from tinymm.errors import FormatError

        path = tmp_path / "ad.bin"
        save_adapter(path, "s", "text", new_adapter(4, 4, 2, seed=0))
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(FormatError):
            load_adapter(path)
