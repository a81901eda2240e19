"""Experiment orchestration: the latent-dimension sweep.

For every ladder entry: train (or load cached) autoencoder -> encode all
splits -> fit regressor on the train split -> Huber-score the test split ->
paired t-test against the best entry. The uncompressed embeddings ("raw")
and class-probability baselines ride along as reference rows.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import analysis
from .analysis import ErrorDistribution, LossCurve, TTestResult
from .autoencoder import AeTrainConfig, ae_encode, ae_train_arrays
from .core import EmbeddingDataset, derive_seed, fit_standardizer
from .ingest import load_embedding_file
from .modelio import ModelFormatError, model_from_bytes, model_to_bytes
from .regressor import (
    ForestConfig,
    MLPConfig,
    forest_fit,
    forest_predict,
    mlp_fit,
    mlp_predict,
)

logger = logging.getLogger("embdim.sweep")

DEFAULT_LADDER = (1, 2, 4, 8, 16, 32, 64, 128, 256, 512)


class SweepStageError(RuntimeError):
    """A sweep stage failed; carries the dimension and stage name."""

    def __init__(self, stage: str, dimension, cause: BaseException):
        super().__init__(f"stage={stage} dim={dimension}: {cause}")
        self.stage = stage
        self.dimension = dimension


@dataclass(frozen=True)
class SweepConfig:
    ladder: tuple[int, ...] = DEFAULT_LADDER
    include_raw: bool = True
    regressor: str = "forest"  # "forest" | "mlp"
    seed: int = 0
    t_test_variant: str = "paired"
    id_threshold: float = 0.10
    id_rule: str = "normalized"  # "normalized" | "ratio"
    ae: AeTrainConfig = AeTrainConfig()
    forest: ForestConfig = ForestConfig()
    mlp: MLPConfig = MLPConfig()
    baselines: tuple[tuple[str, str], ...] = ()  # (label, features path)
    cache_dir: str | None = None
    workers: int = 1

    def __post_init__(self):
        if not self.ladder:
            raise ValueError("ladder must be non-empty")
        if any(d < 1 for d in self.ladder):
            raise ValueError("ladder dimensions must be >= 1")
        if list(self.ladder) != sorted(set(self.ladder)):
            raise ValueError("ladder must be strictly increasing")
        if self.regressor not in ("forest", "mlp"):
            raise ValueError(f"unknown regressor {self.regressor!r}")
        if self.t_test_variant not in ("paired", "welch"):
            raise ValueError(f"unknown t-test variant {self.t_test_variant!r}")
        if self.id_rule not in ("normalized", "ratio"):
            raise ValueError(f"unknown intrinsic-dimension rule {self.id_rule!r}")
        if not 0 < self.id_threshold < 1:
            raise ValueError("id_threshold must lie in (0, 1)")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class CurveEntry:
    dimension: int | str  # latent width, or "raw"
    label: str
    mean_huber: float
    t_vs_best: float = float("nan")
    p_vs_best: float = float("nan")
    band: str = ""
    normalized: float | None = None


@dataclass
class ReconPoint:
    dimension: int
    mean_cosine: float
    excluded: int


@dataclass
class SweepReport:
    provenance: str
    n: int
    dim: int
    split_sizes: dict[str, int]
    config: dict
    entries: list[CurveEntry]  # latent entries, ascending dimension
    raw: CurveEntry | None
    baselines: list[CurveEntry]
    best_dimension: int
    intrinsic_dimension: int
    recon: list[ReconPoint]
    runtime: dict[str, float] = field(default_factory=dict)  # not serialized canonically
    errors: dict[str, ErrorDistribution] = field(default_factory=dict, repr=False)
    t_tests: list[TTestResult] = field(default_factory=list, repr=False)

    def latent_curve(self) -> LossCurve:
        return LossCurve(points=tuple((e.dimension, e.mean_huber) for e in self.entries))


# ---------------------------------------------------------------------------
# caching


def dataset_fingerprint(dataset: EmbeddingDataset) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(dataset.features).tobytes())
    h.update(np.ascontiguousarray(dataset.targets).tobytes())
    if dataset.split_tags is not None:
        h.update(",".join(dataset.split_tags.tolist()).encode())
    h.update("|".join(dataset.doc_ids).encode())
    return h.hexdigest()


def _ae_cache_key(data_hash: str, ae_cfg: AeTrainConfig, d_z: int) -> str:
    from . import __version__

    payload = f"{data_hash}|{ae_cfg!r}|dz={d_z}|v={__version__}"
    return hashlib.sha256(payload.encode()).hexdigest()[:32]


def _cache_load(cache_dir: Path | None, key: str):
    if cache_dir is None:
        return None
    path = cache_dir / f"ae-{key}.mdl"
    if not path.exists():
        return None
    try:
        return model_from_bytes(path.read_bytes())
    except (OSError, ModelFormatError) as exc:
        logger.warning("cache entry %s unreadable (%s); recomputing", path.name, exc)
        return None


def _cache_store(cache_dir: Path | None, key: str, blob: bytes) -> None:
    if cache_dir is None:
        return
    cache_dir.mkdir(parents=True, exist_ok=True)
    (cache_dir / f"ae-{key}.mdl").write_bytes(blob)


# ---------------------------------------------------------------------------
# sweep internals


def _stage(stage: str, dimension):
    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and not isinstance(exc, SweepStageError):
                raise SweepStageError(stage, dimension, exc) from exc
            return False

    return _Ctx()


def _fit_eval(x_train, y_train, x_val, y_val, x_test, cfg: SweepConfig, seed: int) -> np.ndarray:
    if cfg.regressor == "forest":
        model = forest_fit(x_train, y_train, replace(cfg.forest, seed=seed))
        return forest_predict(model, x_test)
    model, _ = mlp_fit(x_train, y_train, replace(cfg.mlp, seed=seed), x_val, y_val)
    return mlp_predict(model, x_test)


def validate_probability_rows(features: np.ndarray, tol: float = 1e-4) -> None:
    """Check each row is a probability vector; raises naming bad row indices."""
    features = np.asarray(features, dtype=np.float64)
    neg = features < -1e-12
    sums = features.sum(axis=1)
    bad = np.flatnonzero(neg.any(axis=1) | (np.abs(sums - 1.0) > tol))
    if bad.size:
        shown = ", ".join(str(int(i)) for i in bad[:10])
        more = "" if bad.size <= 10 else f" (+{bad.size - 10} more)"
        raise ValueError(f"rows are not probability vectors: [{shown}]{more}")


def align_baseline_features(dataset: EmbeddingDataset, baseline: EmbeddingDataset) -> np.ndarray:
    """Reorder a baseline feature file's rows to match the dataset's doc ids."""
    index = {doc: i for i, doc in enumerate(baseline.doc_ids)}
    if len(index) != len(baseline.doc_ids):
        raise ValueError("baseline file has duplicate doc ids")
    try:
        rows = [index[doc] for doc in dataset.doc_ids]
    except KeyError as exc:
        raise ValueError(f"baseline file missing doc id {exc.args[0]!r}") from exc
    return baseline.features[np.asarray(rows)].astype(np.float64)


def run_baseline(
    dataset: EmbeddingDataset,
    features: np.ndarray,
    label: str,
    cfg: SweepConfig,
) -> tuple[CurveEntry, ErrorDistribution]:
    """Fit the sweep's regressor on class-probability features; one curve row."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] != dataset.n:
        raise ValueError("baseline features must align with dataset rows")
    with _stage("baseline-validate", label):
        validate_probability_rows(features)
    dataset.require_splits()
    idx = {tag: dataset.split_indices(tag) for tag in ("train", "val", "test")}
    std = fit_standardizer(dataset.targets[idx["train"]])
    y = std.transform(dataset.targets)
    with _stage("baseline-regress", label):
        preds = _fit_eval(
            features[idx["train"]], y[idx["train"]],
            features[idx["val"]], y[idx["val"]],
            features[idx["test"]],
            cfg, derive_seed(cfg.seed, "baseline", label),
        )
    errors = analysis.error_distribution(
        y[idx["test"]], preds, delta=1.0, label=label
    )
    entry = CurveEntry(dimension=int(features.shape[1]), label=label, mean_huber=errors.mean)
    return entry, errors


def _latent_entry(
    x_splits: dict[str, np.ndarray],
    y_splits: dict[str, np.ndarray],
    cfg: SweepConfig,
    d_z: int,
    data_hash: str,
    cache_dir: Path | None,
):
    t0 = time.perf_counter()
    seed_dim = derive_seed(cfg.seed, "dim", d_z)
    ae_cfg = replace(cfg.ae, seed=derive_seed(seed_dim, "ae"))
    key = _ae_cache_key(data_hash, ae_cfg, d_z)

    model = _cache_load(cache_dir, key)
    if model is None:
        with _stage("ae-train", d_z):
            model, _report = ae_train_arrays(x_splits["train"], x_splits["val"], ae_cfg, d_z)
        blob = model_to_bytes(model)
        _cache_store(cache_dir, key, blob)
        # encode through the serialized form so cold and warm runs agree bit-for-bit
        model = model_from_bytes(blob)

    with _stage("encode", d_z):
        z = {tag: ae_encode(model, x) for tag, x in x_splits.items()}
    with _stage("regress", d_z):
        preds = _fit_eval(
            z["train"], y_splits["train"], z["val"], y_splits["val"], z["test"],
            cfg, derive_seed(seed_dim, "regressor"),
        )
    with _stage("evaluate", d_z):
        errors = analysis.error_distribution(
            y_splits["test"], preds, delta=1.0, label=f"dz={d_z}"
        )
    with _stage("reconstruct", d_z):
        recon = analysis.reconstruction_similarity(model, x_splits["test"])
    elapsed = time.perf_counter() - t0
    return errors, ReconPoint(d_z, recon.mean_cosine, recon.excluded), elapsed


def run_sweep(
    dataset: EmbeddingDataset,
    cfg: SweepConfig,
    baseline_features: dict[str, np.ndarray] | None = None,
) -> SweepReport:
    """Run the full experiment; deterministic given the dataset and config seeds."""
    dataset.require_splits()
    wall_start = time.perf_counter()
    idx = {tag: dataset.split_indices(tag) for tag in ("train", "val", "test")}
    std = fit_standardizer(dataset.targets[idx["train"]])
    y_all = std.transform(dataset.targets)
    x_splits = {tag: dataset.features[i].astype(np.float64) for tag, i in idx.items()}
    y_splits = {tag: y_all[i] for tag, i in idx.items()}
    data_hash = dataset_fingerprint(dataset)
    cache_dir = Path(cfg.cache_dir) if cfg.cache_dir else None
    runtime: dict[str, float] = {}

    def one_dim(d_z: int):
        return _latent_entry(x_splits, y_splits, cfg, d_z, data_hash, cache_dir)

    if cfg.workers == 1:
        latent_results = {d_z: one_dim(d_z) for d_z in cfg.ladder}
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            futures = {d_z: pool.submit(one_dim, d_z) for d_z in cfg.ladder}
            latent_results = {d_z: f.result() for d_z, f in futures.items()}

    errors: dict[str, ErrorDistribution] = {}
    recon: list[ReconPoint] = []
    entries: list[CurveEntry] = []
    for d_z in cfg.ladder:  # deterministic reduction, ascending dimension
        errs, rp, elapsed = latent_results[d_z]
        errors[errs.config_label] = errs
        recon.append(rp)
        entries.append(CurveEntry(dimension=d_z, label=errs.config_label, mean_huber=errs.mean))
        runtime[f"dz={d_z}"] = elapsed

    raw_entry = None
    if cfg.include_raw:
        t0 = time.perf_counter()
        with _stage("regress", "raw"):
            preds = _fit_eval(
                x_splits["train"], y_splits["train"],
                x_splits["val"], y_splits["val"], x_splits["test"],
                cfg, derive_seed(derive_seed(cfg.seed, "dim", "raw"), "regressor"),
            )
        raw_errors = analysis.error_distribution(y_splits["test"], preds, delta=1.0, label="raw")
        errors["raw"] = raw_errors
        raw_entry = CurveEntry(dimension="raw", label="raw", mean_huber=raw_errors.mean)
        runtime["raw"] = time.perf_counter() - t0

    baseline_entries: list[CurveEntry] = []
    all_baselines = dict(baseline_features or {})
    for label, path in cfg.baselines:
        with _stage("baseline-load", label):
            loaded = load_embedding_file(path)
            all_baselines[label] = align_baseline_features(dataset, loaded)
    for label in sorted(all_baselines):
        t0 = time.perf_counter()
        entry, errs = run_baseline(dataset, all_baselines[label], label, cfg)
        errors[label] = errs
        baseline_entries.append(entry)
        runtime[f"baseline:{label}"] = time.perf_counter() - t0

    # best latent dimension and significance vs best
    best_entry = min(entries, key=lambda e: (e.mean_huber, e.dimension))
    best_errors = errors[best_entry.label]
    t_tests: list[TTestResult] = []
    for entry in entries + ([raw_entry] if raw_entry else []) + baseline_entries:
        result = analysis.t_test(errors[entry.label], best_errors, variant=cfg.t_test_variant)
        entry.t_vs_best = result.t_statistic
        entry.p_vs_best = result.p_value
        entry.band = result.band
        t_tests.append(result)

    # normalization over the latent curve, raw/baselines mapped with the same affine
    losses = np.asarray([e.mean_huber for e in entries])
    lo, hi = float(losses.min()), float(losses.max())
    if hi > lo:
        for entry in entries + ([raw_entry] if raw_entry else []) + baseline_entries:
            entry.normalized = (entry.mean_huber - lo) / (hi - lo)

    curve = LossCurve(points=tuple((e.dimension, e.mean_huber) for e in entries))
    intrinsic = analysis.intrinsic_dimension(curve, cfg.id_threshold, cfg.id_rule)

    runtime["total"] = time.perf_counter() - wall_start
    return SweepReport(
        provenance=dataset.provenance,
        n=dataset.n,
        dim=dataset.dim,
        split_sizes={tag: int(i.size) for tag, i in idx.items()},
        config=_config_echo(cfg),
        entries=entries,
        raw=raw_entry,
        baselines=baseline_entries,
        best_dimension=int(best_entry.dimension),
        intrinsic_dimension=int(intrinsic),
        recon=recon,
        runtime=runtime,
        errors=errors,
        t_tests=t_tests,
    )


def _config_echo(cfg: SweepConfig) -> dict:
    """Result-relevant config fields; execution details (cache, workers) excluded."""
    return {
        "ladder": list(cfg.ladder),
        "include_raw": cfg.include_raw,
        "regressor": cfg.regressor,
        "seed": cfg.seed,
        "t_test_variant": cfg.t_test_variant,
        "id_threshold": cfg.id_threshold,
        "id_rule": cfg.id_rule,
        "ae": {
            "max_epochs": cfg.ae.max_epochs,
            "patience": cfg.ae.patience,
            "batch_size": cfg.ae.batch_size,
            "learning_rate": cfg.ae.learning_rate,
            "hidden": list(cfg.ae.hidden),
        },
        "forest": {
            "n_trees": cfg.forest.n_trees,
            "max_depth": cfg.forest.max_depth,
            "min_samples_split": cfg.forest.min_samples_split,
            "min_samples_leaf": cfg.forest.min_samples_leaf,
            "max_features": cfg.forest.max_features,
            "bootstrap": cfg.forest.bootstrap,
        },
        "mlp": {
            "hidden_dim": cfg.mlp.hidden_dim,
            "dropout": cfg.mlp.dropout,
            "huber_delta": cfg.mlp.huber_delta,
            "patience": cfg.mlp.patience,
            "max_epochs": cfg.mlp.max_epochs,
            "batch_size": cfg.mlp.batch_size,
            "learning_rate": cfg.mlp.learning_rate,
        },
        "baselines": [list(b) for b in cfg.baselines],
    }


# ---------------------------------------------------------------------------
# report emission


def _entry_dict(entry: CurveEntry) -> dict:
    return {
        "dimension": entry.dimension,
        "label": entry.label,
        "mean_huber": float(entry.mean_huber),
        "normalized": None if entry.normalized is None else float(entry.normalized),
        "t_vs_best": float(entry.t_vs_best),
        "p_vs_best": float(entry.p_vs_best),
        "significance_band": entry.band,
    }


def report_to_dict(report: SweepReport) -> dict:
    """Canonical, deterministic report document (no runtime metadata)."""
    return {
        "provenance": report.provenance,
        "dataset": {
            "n": report.n,
            "dim": report.dim,
            "split_sizes": report.split_sizes,
        },
        "config": report.config,
        "curve": [_entry_dict(e) for e in report.entries],
        "raw": None if report.raw is None else _entry_dict(report.raw),
        "baselines": [_entry_dict(e) for e in report.baselines],
        "best_dimension": report.best_dimension,
        "intrinsic_dimension": report.intrinsic_dimension,
        "reconstruction": [
            {"dimension": p.dimension, "mean_cosine": float(p.mean_cosine), "excluded": p.excluded}
            for p in report.recon
        ],
        "t_tests": [
            {
                "a": r.comparison[0],
                "b": r.comparison[1],
                "t": float(r.t_statistic),
                "p": float(r.p_value),
                "variant": r.variant,
                "band": r.band,
            }
            for r in report.t_tests
        ],
    }


def report_to_json_bytes(report: SweepReport) -> bytes:
    doc = report_to_dict(report)
    return (json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n").encode()


def write_report(report: SweepReport, out_dir: str | Path) -> dict[str, Path]:
    """Write report.json (canonical), report.csv, and run_meta.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "report.json"
    json_path.write_bytes(report_to_json_bytes(report))

    csv_path = out_dir / "report.csv"
    lines = ["dimension,label,mean_huber,normalized,p_vs_best,significance_band"]
    rows = report.entries + ([report.raw] if report.raw else []) + report.baselines
    for e in rows:
        norm = "" if e.normalized is None else repr(float(e.normalized))
        lines.append(
            f"{e.dimension},{e.label},{float(e.mean_huber)!r},{norm},"
            f"{float(e.p_vs_best)!r},{e.band}"
        )
    csv_path.write_text("\n".join(lines) + "\n")

    meta_path = out_dir / "run_meta.json"
    meta_path.write_text(json.dumps({"runtime_seconds": report.runtime}, indent=2, sort_keys=True) + "\n")
    return {"report_json": json_path, "report_csv": csv_path, "run_meta": meta_path}


def load_report_dict(path: str | Path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def report_from_dict(doc: dict) -> SweepReport:
    """Rebuild a report object from its canonical JSON document (sans raw errors)."""

    def entry(d: dict) -> CurveEntry:
        return CurveEntry(
            dimension=d["dimension"],
            label=d["label"],
            mean_huber=d["mean_huber"],
            t_vs_best=d["t_vs_best"],
            p_vs_best=d["p_vs_best"],
            band=d["significance_band"],
            normalized=d["normalized"],
        )

    return SweepReport(
        provenance=doc["provenance"],
        n=doc["dataset"]["n"],
        dim=doc["dataset"]["dim"],
        split_sizes=doc["dataset"]["split_sizes"],
        config=doc["config"],
        entries=[entry(e) for e in doc["curve"]],
        raw=entry(doc["raw"]) if doc.get("raw") else None,
        baselines=[entry(e) for e in doc.get("baselines", [])],
        best_dimension=doc["best_dimension"],
        intrinsic_dimension=doc["intrinsic_dimension"],
        recon=[
            ReconPoint(p["dimension"], p["mean_cosine"], p["excluded"])
            for p in doc.get("reconstruction", [])
        ],
    )
