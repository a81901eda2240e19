import numpy as np
import pytest

from embdim.analysis import huber
from embdim.ingest import load_embedding_file
from embdim.synthgen import SynthConfig, generate, generate_to_files, generate_with_latent


def _small(**kw):
    defaults = dict(dim=24, latent_k=4, n=400, seed=7)
    defaults.update(kw)
    return SynthConfig(**defaults)


class TestGenerate:
    def test_shapes_and_splits(self):
        ds = generate(_small())
        assert ds.features.shape == (400, 24)
        assert ds.split_indices("train").size == 320
        assert ds.split_indices("val").size == 40
        assert ds.split_indices("test").size == 40

    def test_targets_standardized_on_train(self):
        ds = generate(_small(sigma_y=0.5))
        train = ds.targets[ds.split_indices("train")]
        assert abs(train.mean()) < 1e-9
        assert abs(np.std(train) - 1.0) < 1e-9

    def test_same_seed_identical_bytes(self, tmp_path):
        generate_to_files(_small(), tmp_path / "a.emb")
        generate_to_files(_small(), tmp_path / "b.emb")
        assert (tmp_path / "a.emb").read_bytes() == (tmp_path / "b.emb").read_bytes()
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_different_seed_differs(self, tmp_path):
        generate_to_files(_small(), tmp_path / "a.emb")
        generate_to_files(_small(seed=8), tmp_path / "b.emb")
        assert (tmp_path / "a.emb").read_bytes() != (tmp_path / "b.emb").read_bytes()

    def test_files_load_through_ingest(self, tmp_path):
        emb, targets = generate_to_files(_small(), tmp_path / "a.emb")
        ds = load_embedding_file(emb, targets)
        assert ds.n == 400
        ds.require_splits()

    def test_k_greater_than_dim_rejected(self):
        with pytest.raises(ValueError):
            SynthConfig(dim=4, latent_k=5, n=100)


class TestRankStructure:
    def test_noiseless_features_have_rank_exactly_k(self):
        res = generate_with_latent(_small(sigma_v=0.0))
        # float64 construction: exactly k nonzero singular values
        v64 = res.latent @ res.mixing.T
        sv64 = np.linalg.svd(v64, compute_uv=False)
        assert np.all(sv64[:4] > 1e-6)
        assert np.all(sv64[4:] < 1e-8 * sv64[0])
        # stored float32 matrix: same rank up to f32 quantization noise
        sv = np.linalg.svd(res.dataset.features.astype(np.float64), compute_uv=False)
        assert np.all(sv[:4] > 1e-6)
        assert np.all(sv[4:] < 1e-6 * sv[0])

    def test_noisy_features_have_full_numerical_rank(self):
        res = generate_with_latent(_small(sigma_v=0.3))
        sv = np.linalg.svd(res.dataset.features.astype(np.float64), compute_uv=False)
        assert np.all(sv > 1e-6)

    def test_nuisance_dimensions_add_rank(self):
        res = generate_with_latent(_small(nuisance_dims=3, nuisance_energy=1.0))
        sv = np.linalg.svd(res.dataset.features.astype(np.float64), compute_uv=False)
        assert np.sum(sv > 1e-6 * sv[0]) == 7  # k=4 signal + 3 nuisance

    def test_mixing_columns_orthonormal(self):
        res = generate_with_latent(_small())
        gram = res.mixing.T @ res.mixing
        assert np.allclose(gram, np.eye(4), atol=1e-12)


class TestOraclePredictors:
    def test_noiseless_oracle_achieves_zero_huber(self):
        res = generate_with_latent(_small(sigma_y=0.0, sigma_v=0.0, latent_k=1))
        oracle = res.oracle_predictions()
        errs = huber(res.dataset.targets, oracle)
        assert float(np.max(errs)) < 1e-18

    def test_huge_noise_oracle_close_to_constant_predictor(self):
        res = generate_with_latent(_small(n=4000, sigma_y=100.0))
        ds = res.dataset
        test = ds.split_indices("test")
        y_test = ds.targets[test]
        oracle_errs = huber(y_test, res.oracle_predictions()[test])
        train_mean = float(ds.targets[ds.split_indices("train")].mean())
        const_errs = huber(y_test, np.full(test.size, train_mean))
        assert float(np.mean(oracle_errs)) <= float(np.mean(const_errs)) * 1.05
        assert float(np.mean(const_errs)) <= float(np.mean(oracle_errs)) * 1.05

    def test_more_target_noise_widens_oracle_gap(self):
        # gap between the constant predictor and the oracle shrinks as noise grows
        gaps = []
        for sigma_y in (0.1, 1.0, 10.0):
            res = generate_with_latent(_small(n=2000, sigma_y=sigma_y, seed=3))
            ds = res.dataset
            test = ds.split_indices("test")
            y_test = ds.targets[test]
            oracle_mean = float(np.mean(huber(y_test, res.oracle_predictions()[test])))
            train_mean = float(ds.targets[ds.split_indices("train")].mean())
            const_mean = float(np.mean(huber(y_test, np.full(test.size, train_mean))))
            gaps.append(const_mean - oracle_mean)
        assert gaps[0] > gaps[1] > gaps[2]

    def test_snr_recorded_in_provenance(self):
        ds = generate(_small(sigma_y=2.0))
        assert "snr=" in ds.provenance
        assert "sigma_y=2.0" in ds.provenance
