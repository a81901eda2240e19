import numpy as np
import pytest

from embdim.analysis import huber
from embdim.autoencoder import AeTrainConfig
from embdim.plots import emit_plots
from embdim.regressor import ForestConfig
from embdim.sweep import (
    SweepConfig,
    SweepStageError,
    report_to_json_bytes,
    run_baseline,
    run_sweep,
    validate_probability_rows,
    write_report,
)
from embdim.synthgen import SynthConfig, generate


def _tiny_cfg(**kw):
    defaults = dict(
        ladder=(2, 4, 8),
        seed=42,
        ae=AeTrainConfig(max_epochs=12, patience=4, batch_size=64, seed=0),
        forest=ForestConfig(n_trees=10, seed=0),
    )
    defaults.update(kw)
    return SweepConfig(**defaults)


@pytest.fixture(scope="module")
def tiny_dataset():
    return generate(SynthConfig(dim=12, latent_k=3, n=240, sigma_y=0.3, sigma_v=0.2, seed=5))


@pytest.fixture(scope="module")
def tiny_report(tiny_dataset):
    return run_sweep(tiny_dataset, _tiny_cfg())


class TestRunSweep:
    def test_full_rank_compression_is_near_lossless(self):
        # at d_z = d_LLM the autoencoder preserves essentially all information:
        # reconstruction is near-perfect and the regression entry does not
        # degrade relative to raw (the learned basis may even help a CART head,
        # so equality of the two entries is not asserted)
        ds = generate(SynthConfig(dim=10, latent_k=3, n=300, sigma_y=0.0, sigma_v=0.0, seed=9))
        cfg = _tiny_cfg(
            ladder=(10,),
            ae=AeTrainConfig(max_epochs=80, patience=79, batch_size=32, learning_rate=3e-3, seed=1),
        )
        report = run_sweep(ds, cfg)
        raw_loss = report.raw.mean_huber
        full_rank_loss = report.entries[0].mean_huber
        assert full_rank_loss <= raw_loss * 1.02 + 1e-6
        assert report.recon[0].mean_cosine > 0.999

    def test_best_dimension_is_curve_argmin(self, tiny_report):
        losses = {e.dimension: e.mean_huber for e in tiny_report.entries}
        assert tiny_report.best_dimension == min(losses, key=lambda d: (losses[d], d))

    def test_best_vs_itself_p_is_one(self, tiny_report):
        best = next(e for e in tiny_report.entries if e.dimension == tiny_report.best_dimension)
        assert best.p_vs_best == 1.0
        assert best.t_vs_best == 0.0

    def test_normalized_spans_unit_interval(self, tiny_report):
        vals = [e.normalized for e in tiny_report.entries]
        assert min(vals) == 0.0
        assert max(vals) == 1.0

    def test_recon_curve_covers_ladder(self, tiny_report):
        assert [p.dimension for p in tiny_report.recon] == [2, 4, 8]
        assert all(-1.0 <= p.mean_cosine <= 1.0 for p in tiny_report.recon)

    def test_report_counts_splits(self, tiny_report):
        assert tiny_report.split_sizes == {"train": 192, "val": 24, "test": 24}

    def test_determinism_byte_identical_json(self, tiny_dataset):
        a = report_to_json_bytes(run_sweep(tiny_dataset, _tiny_cfg()))
        b = report_to_json_bytes(run_sweep(tiny_dataset, _tiny_cfg()))
        assert a == b

    def test_workers_do_not_change_result(self, tiny_dataset, tiny_report):
        parallel = run_sweep(tiny_dataset, _tiny_cfg(workers=3))
        assert report_to_json_bytes(parallel) == report_to_json_bytes(tiny_report)

    def test_requires_splits(self, tiny_dataset):
        from dataclasses import replace

        unsplit = replace(tiny_dataset, split_tags=None)
        with pytest.raises(ValueError, match="split"):
            run_sweep(unsplit, _tiny_cfg())


class TestCaching:
    def test_warm_cache_matches_cold(self, tiny_dataset, tmp_path):
        cfg = _tiny_cfg(cache_dir=str(tmp_path / "cache"))
        cold = report_to_json_bytes(run_sweep(tiny_dataset, cfg))
        warm = report_to_json_bytes(run_sweep(tiny_dataset, cfg))
        assert cold == warm

    def test_cache_files_created_per_dimension(self, tiny_dataset, tmp_path):
        cache = tmp_path / "cache"
        run_sweep(tiny_dataset, _tiny_cfg(cache_dir=str(cache)))
        assert len(list(cache.glob("ae-*.mdl"))) == 3

    def test_deleting_one_entry_invalidates_only_it(self, tiny_dataset, tmp_path):
        cache = tmp_path / "cache"
        cfg = _tiny_cfg(cache_dir=str(cache))
        baseline = report_to_json_bytes(run_sweep(tiny_dataset, cfg))
        files = sorted(cache.glob("ae-*.mdl"))
        victim = files[1]
        kept = [f for f in files if f != victim]
        kept_mtimes = {f: f.stat().st_mtime_ns for f in kept}
        victim.unlink()
        again = report_to_json_bytes(run_sweep(tiny_dataset, cfg))
        assert again == baseline
        assert victim.exists()  # recomputed
        for f in kept:
            assert f.stat().st_mtime_ns == kept_mtimes[f]  # untouched

    def test_corrupt_cache_recomputed_with_warning(self, tiny_dataset, tmp_path, caplog):
        cache = tmp_path / "cache"
        cfg = _tiny_cfg(cache_dir=str(cache))
        baseline = report_to_json_bytes(run_sweep(tiny_dataset, cfg))
        victim = sorted(cache.glob("ae-*.mdl"))[0]
        victim.write_bytes(b"garbage")
        with caplog.at_level("WARNING", logger="embdim.sweep"):
            again = report_to_json_bytes(run_sweep(tiny_dataset, cfg))
        assert again == baseline
        assert any("recomputing" in r.message for r in caplog.records)


class TestBaselines:
    def test_one_hot_probabilities_explain_discrete_target(self, tmp_path):
        rng = np.random.default_rng(3)
        n, k = 300, 4
        classes = rng.integers(0, k, size=n)
        ds = generate(SynthConfig(dim=8, latent_k=2, n=n, seed=11))
        # overwrite targets with a purely class-determined value
        ds = ds.with_targets(classes.astype(float) - classes.mean())
        probs = np.eye(k)[classes]
        cfg = _tiny_cfg()
        entry, errors = run_baseline(ds, probs, "onehot", cfg)
        assert entry.dimension == k
        assert entry.mean_huber < 1e-3

    def test_uninformative_probabilities_match_constant_predictor(self):
        ds = generate(SynthConfig(dim=8, latent_k=2, n=400, sigma_y=0.5, seed=12))
        probs = np.full((400, 3), 1.0 / 3.0)
        cfg = _tiny_cfg(forest=ForestConfig(n_trees=10, seed=0))
        entry, errors = run_baseline(ds, probs, "uniform", cfg)
        test_idx = ds.split_indices("test")
        train_idx = ds.split_indices("train")
        from embdim.core import fit_standardizer

        std = fit_standardizer(ds.targets[train_idx])
        y = std.transform(ds.targets)
        const = float(np.mean(huber(y[test_idx], np.full(test_idx.size, y[train_idx].mean()))))
        assert entry.mean_huber <= const * 1.05
        assert const <= entry.mean_huber * 1.05

    def test_simplex_violation_names_rows(self):
        ds = generate(SynthConfig(dim=8, latent_k=2, n=240, seed=13))
        probs = np.full((240, 3), 1.0 / 3.0)
        probs[2] = [0.5, 0.2, 0.1]  # sums to 0.8
        with pytest.raises(SweepStageError, match=r"\[2\]") as exc_info:
            run_baseline(ds, probs, "sent", _tiny_cfg())
        assert exc_info.value.stage == "baseline-validate"

    def test_validate_probability_rows_direct(self):
        probs = np.full((4, 2), 0.5)
        validate_probability_rows(probs)
        probs[1, 0] = -0.2
        with pytest.raises(ValueError, match=r"\[1\]"):
            validate_probability_rows(probs)

    def test_baselines_ride_along_in_sweep(self, tiny_dataset):
        probs = np.full((tiny_dataset.n, 3), 1.0 / 3.0)
        report = run_sweep(tiny_dataset, _tiny_cfg(), baseline_features={"uniform": probs})
        assert len(report.baselines) == 1
        row = report.baselines[0]
        assert row.label == "uniform"
        assert row.dimension == 3
        assert 0.0 <= row.p_vs_best <= 1.0


class TestReportEmission:
    def test_write_report_files(self, tiny_report, tmp_path):
        paths = write_report(tiny_report, tmp_path)
        assert paths["report_json"].exists()
        csv_lines = paths["report_csv"].read_text().splitlines()
        assert csv_lines[0] == "dimension,label,mean_huber,normalized,p_vs_best,significance_band"
        assert len(csv_lines) == 1 + 3 + 1  # header + ladder + raw
        assert paths["run_meta"].exists()

    def test_plot_sidecars_echo_data(self, tiny_report, tmp_path):
        paths = emit_plots(tiny_report, tmp_path)
        loss_rows = paths["loss_curve_csv"].read_text().splitlines()[1:]
        assert len(loss_rows) == 3 + 1  # ladder points + raw, no baselines
        norm_rows = paths["normalized_csv"].read_text().splitlines()[1:]
        latent_rows = [r for r in norm_rows if ",raw," not in r]
        vals = [float(r.split(",")[2]) for r in latent_rows]
        assert min(vals) == 0.0 and max(vals) == 1.0
        recon_rows = paths["reconstruction_csv"].read_text().splitlines()[1:]
        assert len(recon_rows) == 3
        for key in ("loss_curve_svg", "normalized_svg", "reconstruction_svg"):
            assert paths[key].stat().st_size > 0

    def test_misaligned_baseline_rejected(self, tiny_dataset):
        with pytest.raises(ValueError, match="align"):
            run_baseline(tiny_dataset, np.full((3, 2), 0.5), "bad", _tiny_cfg())

    def test_stage_error_carries_dimension_and_stage(self, tiny_dataset):
        ds = generate(SynthConfig(dim=8, latent_k=2, n=240, seed=13))
        probs = np.full((240, 3), 1.0 / 3.0)
        probs[5] = [2.0, 2.0, 2.0]
        with pytest.raises(SweepStageError) as exc_info:
            run_sweep(ds, _tiny_cfg(ladder=(2,)), baseline_features={"sent": probs})
        err = exc_info.value
        assert err.stage == "baseline-validate"
        assert err.dimension == "sent"
        assert "stage=baseline-validate" in str(err)
