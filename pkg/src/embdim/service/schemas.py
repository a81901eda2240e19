"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class SynthRequest(BaseModel):
    out_dir: str
    name: str = "synthetic"
    dim: int = 768
    latent_k: int = 8
    n: int = 5000
    sigma_y: float = 0.0
    sigma_v: float = 0.0
    nuisance_energy: float = 0.0
    nuisance_dims: int = 0
    nonlinear: bool = False
    seed: int = 0
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)


class SynthResponse(BaseModel):
    embeddings_path: str
    targets_path: str
    n: int
    dim: int
    provenance: str


class AeOptions(BaseModel):
    max_epochs: int = 100
    patience: int = 5
    batch_size: int = 256
    learning_rate: float = 1e-3
    hidden: list[int] = Field(default_factory=list)


class ForestOptions(BaseModel):
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: int | None = None
    bootstrap: bool = True
    n_jobs: int = 1


class MlpOptions(BaseModel):
    hidden_dim: int = 64
    dropout: float = 0.0
    huber_delta: float = 1.0
    patience: int = 5
    max_epochs: int = 100
    batch_size: int = 256
    learning_rate: float = 1e-3


class BaselineSpec(BaseModel):
    label: str
    path: str


class SweepRequest(BaseModel):
    embeddings_path: str
    targets_path: str | None = None  # defaults to the embeddings path with .csv
    out_dir: str
    ladder: list[int] = Field(default_factory=lambda: [1, 2, 4, 8, 16, 32, 64, 128, 256, 512])
    include_raw: bool = True
    regressor: Literal["forest", "mlp"] = "forest"
    seed: int = 0
    t_test_variant: Literal["paired", "welch"] = "paired"
    id_threshold: float = 0.10
    id_rule: Literal["normalized", "ratio"] = "normalized"
    cache_dir: str | None = None  # falls back to $EMBDIM_CACHE
    workers: int = 1
    baselines: list[BaselineSpec] = Field(default_factory=list)
    emit_plots: bool = True
    ae: AeOptions = AeOptions()
    forest: ForestOptions = ForestOptions()
    mlp: MlpOptions = MlpOptions()


class SweepResponse(BaseModel):
    report: dict
    report_path: str
    report_csv_path: str
    run_meta_path: str
    plot_paths: dict[str, str]


class BaselineRequest(BaseModel):
    embeddings_path: str
    targets_path: str | None = None
    features_path: str
    features_targets_path: str | None = None
    label: str
    regressor: Literal["forest", "mlp"] = "forest"
    seed: int = 0
    forest: ForestOptions = ForestOptions()
    mlp: MlpOptions = MlpOptions()


class BaselineResponse(BaseModel):
    label: str
    dimension: int
    mean_huber: float


class ReportRenderRequest(BaseModel):
    report_paths: list[str]
    out_dir: str
    names: list[str] | None = None  # series labels for the overlay


class ReportSummary(BaseModel):
    name: str
    best_dimension: int
    intrinsic_dimension: int
    best_mean_huber: float
    raw_mean_huber: float | None
    raw_p_vs_best: float | None


class ReportRenderResponse(BaseModel):
    summaries: list[ReportSummary]
    plot_paths: dict[str, str]
