import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from embdim.core import EmbeddingDataset
from embdim.ingest import (
    ChunkedEmbeddingRecord,
    FormatError,
    SplitSpec,
    apply_split,
    assemble_pooled_dataset,
    build_returns,
    compute_return,
    load_chunked_file,
    load_embedding_file,
    pool_chunks,
    save_chunked_file,
    save_embedding_file,
)


def _dataset(n=4, d=3, with_dates=False, with_splits=False):
    rng = np.random.default_rng(5)
    kw = {}
    if with_dates:
        kw["dates"] = tuple(f"2021-01-{i + 1:02d}" for i in range(n))
    if with_splits:
        tags = ["train"] * (n - 2) + ["val", "test"]
        kw["split_tags"] = np.array(tags)
    return EmbeddingDataset(
        features=rng.standard_normal((n, d)).astype(np.float32),
        targets=rng.standard_normal(n),
        doc_ids=tuple(f"doc{i}" for i in range(n)),
        **kw,
    )


class TestPoolChunks:
    def test_single_chunk_identity(self):
        rec = ChunkedEmbeddingRecord("d", np.array([[1.0, 2.0, 3.0]]), np.array([7]))
        assert pool_chunks(rec).tolist() == [1.0, 2.0, 3.0]

    def test_symmetric_mean(self):
        rec = ChunkedEmbeddingRecord("d", np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([1, 1]))
        assert pool_chunks(rec).tolist() == [0.5, 0.5]

    def test_token_count_weighting(self):
        rec = ChunkedEmbeddingRecord("d", np.array([[2.0, 2.0], [0.0, 0.0]]), np.array([3, 1]))
        assert pool_chunks(rec).tolist() == [1.5, 1.5]

    def test_flat_mean_flag(self):
        rec = ChunkedEmbeddingRecord("d", np.array([[2.0, 2.0], [0.0, 0.0]]), np.array([3, 1]))
        assert pool_chunks(rec, weighted=False).tolist() == [1.0, 1.0]

    @given(st.permutations(range(4)))
    @settings(deadline=None)
    def test_permutation_invariant(self, perm):
        rng = np.random.default_rng(3)
        vecs = rng.standard_normal((4, 5))
        counts = np.array([4, 1, 9, 2])
        base = pool_chunks(ChunkedEmbeddingRecord("d", vecs, counts))
        shuffled = pool_chunks(
            ChunkedEmbeddingRecord("d", vecs[list(perm)], counts[list(perm)])
        )
        assert np.allclose(base, shuffled, atol=1e-12)

    def test_equal_counts_match_flat_mean(self):
        rng = np.random.default_rng(4)
        vecs = rng.standard_normal((3, 4))
        rec = ChunkedEmbeddingRecord("d", vecs, np.array([5, 5, 5]))
        assert np.allclose(pool_chunks(rec), vecs.mean(axis=0), atol=1e-12)


class TestComputeReturn:
    def test_five_percent_rise(self):
        assert compute_return(100.0, 105.0) == pytest.approx(0.05)

    def test_flat(self):
        assert compute_return(100.0, 100.0) == 0.0

    def test_fall(self):
        assert compute_return(80.0, 60.0) == pytest.approx(-0.25)

    def test_nonpositive_price_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            compute_return(0.0, 10.0)

    @given(
        st.floats(0.01, 1e5),
        st.floats(0.0, 1e5),
        st.floats(0.01, 100.0),
    )
    @settings(deadline=None, max_examples=100)
    def test_scale_invariance(self, a, b, k):
        assert compute_return(k * a, k * b) == pytest.approx(compute_return(a, b), rel=1e-9, abs=1e-12)

    def test_build_returns_uses_neighbor_prices(self):
        prices = [
            ("AAA", "2021-01-01", 100.0),
            ("AAA", "2021-01-02", 101.0),
            ("AAA", "2021-01-03", 105.0),
        ]
        rows = build_returns(prices)
        assert len(rows) == 1
        assert rows[0].date == "2021-01-02"
        assert rows[0].r == pytest.approx(0.05)


class TestFlatFormat:
    def test_round_trip_bit_exact(self, tmp_path):
        ds = _dataset(with_dates=True, with_splits=True)
        emb, targets = save_embedding_file(ds, tmp_path / "a.emb")
        loaded = load_embedding_file(emb)
        emb2, targets2 = save_embedding_file(loaded, tmp_path / "b.emb")
        assert emb.read_bytes() == emb2.read_bytes()
        assert targets.read_bytes() == targets2.read_bytes()
        assert np.array_equal(loaded.features, ds.features)
        assert np.array_equal(loaded.targets, ds.targets)
        assert loaded.doc_ids == ds.doc_ids
        assert np.array_equal(loaded.split_tags, ds.split_tags)

    def test_empty_payload_rejected(self, tmp_path):
        p = tmp_path / "x.emb"
        p.write_bytes(b"EMB1" + struct.pack("<II", 0, 3))
        with pytest.raises(FormatError, match="empty"):
            load_embedding_file(p, tmp_path / "missing.csv")

    def test_shape_echo(self, tmp_path):
        ds = _dataset(n=2, d=3)
        emb, _ = save_embedding_file(ds, tmp_path / "a.emb")
        loaded = load_embedding_file(emb)
        assert loaded.features.shape == (2, 3)

    def test_nan_rejected_with_row(self, tmp_path):
        n, d = 9, 2
        feats = np.ones((n, d), dtype="<f4")
        feats[7, 0] = np.nan
        p = tmp_path / "x.emb"
        p.write_bytes(b"EMB1" + struct.pack("<II", n, d) + feats.tobytes())
        (tmp_path / "x.csv").write_text(
            "doc_id,target\n" + "\n".join(f"d{i},0.0" for i in range(n)) + "\n"
        )
        with pytest.raises(FormatError, match="row 7"):
            load_embedding_file(p)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "x.emb"
        p.write_bytes(b"NOPE" + struct.pack("<II", 1, 1) + b"\x00" * 4)
        with pytest.raises(FormatError, match="magic"):
            load_embedding_file(p, tmp_path / "missing.csv")

    def test_row_count_mismatch(self, tmp_path):
        ds = _dataset(n=4)
        emb, targets = save_embedding_file(ds, tmp_path / "a.emb")
        lines = targets.read_text().splitlines()
        targets.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(FormatError, match="mismatch"):
            load_embedding_file(emb)

    def test_truncated_payload(self, tmp_path):
        ds = _dataset(n=4)
        emb, _ = save_embedding_file(ds, tmp_path / "a.emb")
        emb.write_bytes(emb.read_bytes()[:-4])
        with pytest.raises(FormatError, match="payload size"):
            load_embedding_file(emb)


class TestChunkedFormat:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        records = [
            ChunkedEmbeddingRecord(
                f"doc{i}",
                rng.standard_normal((i + 1, 4)).astype(np.float32),
                np.arange(1, i + 2) * 3,
            )
            for i in range(3)
        ]
        path = save_chunked_file(records, tmp_path / "c.emc", max_context=64)
        loaded, c = load_chunked_file(path)
        assert c == 64
        assert [r.doc_id for r in loaded] == ["doc0", "doc1", "doc2"]
        for a, b in zip(records, loaded):
            assert np.array_equal(a.chunk_vectors, b.chunk_vectors)
            assert np.array_equal(a.chunk_token_counts, b.chunk_token_counts)

    def test_count_above_context_rejected(self, tmp_path):
        rec = ChunkedEmbeddingRecord("d", np.ones((1, 2), dtype=np.float32), np.array([99]))
        with pytest.raises(FormatError, match="C=10"):
            save_chunked_file([rec], tmp_path / "c.emc", max_context=10)

    def test_assemble_pooled_dataset(self, tmp_path):
        records = [
            ChunkedEmbeddingRecord("a", np.array([[2.0, 2.0], [0.0, 0.0]], dtype=np.float32), np.array([3, 1])),
            ChunkedEmbeddingRecord("b", np.array([[1.0, 1.0]], dtype=np.float32), np.array([4])),
        ]
        path = save_chunked_file(records, tmp_path / "c.emc", max_context=16)
        (tmp_path / "t.csv").write_text("doc_id,target\nb,2.0\na,1.0\n")
        ds = assemble_pooled_dataset(path, tmp_path / "t.csv")
        assert ds.doc_ids == ("a", "b")
        assert np.allclose(ds.features[0], [1.5, 1.5])
        assert ds.targets.tolist() == [1.0, 2.0]

    def test_assemble_missing_doc_id(self, tmp_path):
        records = [ChunkedEmbeddingRecord("a", np.ones((1, 2), dtype=np.float32), np.array([1]))]
        path = save_chunked_file(records, tmp_path / "c.emc", max_context=16)
        (tmp_path / "t.csv").write_text("doc_id,target\nzzz,2.0\n")
        with pytest.raises(FormatError, match="missing"):
            assemble_pooled_dataset(path, tmp_path / "t.csv")


class TestApplySplit:
    def test_random_sizes(self):
        ds = _dataset(n=10)
        out = apply_split(ds, SplitSpec(mode="random", fractions=(0.8, 0.1, 0.1), seed=3))
        assert out.split_indices("train").size == 8
        assert out.split_indices("val").size == 1
        assert out.split_indices("test").size == 1

    def test_random_deterministic(self):
        ds = _dataset(n=30)
        spec = SplitSpec(mode="random", fractions=(0.8, 0.1, 0.1), seed=11)
        a = apply_split(ds, spec)
        b = apply_split(ds, spec)
        assert np.array_equal(a.split_tags, b.split_tags)

    def test_temporal_last_tenth_is_validation(self):
        n_pre, n_post = 100, 20
        dates = tuple(
            f"2020-{(i // 28) + 1:02d}-{(i % 28) + 1:02d}" for i in range(n_pre)
        ) + tuple(f"2023-01-{i + 1:02d}" for i in range(n_post))
        rng = np.random.default_rng(0)
        ds = EmbeddingDataset(
            features=rng.standard_normal((n_pre + n_post, 2)).astype(np.float32),
            targets=np.zeros(n_pre + n_post),
            doc_ids=tuple(str(i) for i in range(n_pre + n_post)),
            dates=dates,
        )
        out = apply_split(ds, SplitSpec(mode="temporal", test_start="2023-01-01"))
        tags = out.split_tags
        # rows 90..99 are the last 10% of the pre-test period
        assert set(tags[:90]) == {"train"}
        assert set(tags[90:100]) == {"val"}
        assert set(tags[100:]) == {"test"}

    def test_temporal_requires_dates(self):
        ds = _dataset(n=10)
        with pytest.raises(ValueError, match="dated rows"):
            apply_split(ds, SplitSpec(mode="temporal", test_start="2023-01-01"))

    def test_empty_split_rejected(self):
        ds = _dataset(n=10)
        with pytest.raises(ValueError, match="empty"):
            apply_split(ds, SplitSpec(mode="random", fractions=(1.0, 0.0, 0.0), seed=0))

    def test_fraction_sum_validated(self):
        with pytest.raises(ValueError, match="sum to 1"):
            SplitSpec(mode="random", fractions=(0.5, 0.2, 0.2))

    def test_boundary_order_validated(self):
        with pytest.raises(ValueError, match="ordered"):
            SplitSpec(mode="temporal", test_start="2022-01-01", val_start="2022-06-01")
