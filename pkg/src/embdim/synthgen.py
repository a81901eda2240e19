"""Synthetic embedding/target datasets with a controllable signal-to-noise ratio.

Features live on a seeded k-dimensional linear subspace of the ambient
space plus optional isotropic noise; targets are a fixed unit-norm linear
readout of the latent coordinates plus Gaussian noise. Everything is
deterministic in the seed, so oracle predictors have closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EmbeddingDataset, derive_seed, fit_standardizer, make_rng
from .ingest import SplitSpec, apply_split, save_embedding_file


@dataclass(frozen=True)
class SynthConfig:
    dim: int = 768  # ambient embedding dimension
    latent_k: int = 8  # true signal rank
    n: int = 5000
    sigma_y: float = 0.0  # target-noise scale
    sigma_v: float = 0.0  # isotropic embedding-noise scale
    nuisance_energy: float = 0.0  # energy of structured target-irrelevant directions
    nuisance_dims: int = 0
    nonlinear: bool = False  # sign-flip interaction instead of a pure linear readout
    seed: int = 0
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def __post_init__(self):
        if self.latent_k < 1 or self.latent_k > self.dim:
            raise ValueError("latent_k must satisfy 1 <= k <= dim")
        if self.sigma_y < 0 or self.sigma_v < 0 or self.nuisance_energy < 0:
            raise ValueError("noise scales must be non-negative")
        if self.nuisance_dims < 0 or self.latent_k + self.nuisance_dims > self.dim:
            raise ValueError("nuisance_dims must fit alongside latent_k in dim")
        if self.n < 10:
            raise ValueError("need at least 10 samples to split")


@dataclass(frozen=True)
class SynthResult:
    dataset: EmbeddingDataset
    latent: np.ndarray  # (n, k) latent draws
    mixing: np.ndarray  # (dim, k) orthonormal columns
    target_weights: np.ndarray  # (k,) unit-norm readout
    signal: np.ndarray  # (n,) noise-free targets, raw units
    raw_targets: np.ndarray  # (n,) noisy targets before standardization

    def oracle_predictions(self) -> np.ndarray:
        """Noise-free targets mapped into the dataset's standardized units."""
        idx_train = self.dataset.split_indices("train")
        std = fit_standardizer(self.raw_targets[idx_train])
        return std.transform(self.signal)


def generate_with_latent(cfg: SynthConfig) -> SynthResult:
    rng = make_rng(derive_seed(cfg.seed, "synthgen"))
    k, d, n = cfg.latent_k, cfg.dim, cfg.n

    n_basis = k + cfg.nuisance_dims
    basis, _ = np.linalg.qr(rng.standard_normal((d, n_basis)))
    mixing = basis[:, :k]
    w = rng.standard_normal(k)
    w /= np.linalg.norm(w)

    u = rng.standard_normal((n, k))
    v = u @ mixing.T
    if cfg.nuisance_dims > 0 and cfg.nuisance_energy > 0:
        m = rng.standard_normal((n, cfg.nuisance_dims))
        v = v + cfg.nuisance_energy * (m @ basis[:, k:].T)
    if cfg.sigma_v > 0:
        v = v + cfg.sigma_v * rng.standard_normal((n, d))

    signal = u @ w
    if cfg.nonlinear:
        signal = signal * np.sign(u[:, 0])
    raw_targets = signal.copy()
    if cfg.sigma_y > 0:
        raw_targets = raw_targets + cfg.sigma_y * rng.standard_normal(n)

    snr = float(np.var(signal) / cfg.sigma_y**2) if cfg.sigma_y > 0 else float("inf")
    provenance = (
        f"synthgen(k={k}, d={d}, n={n}, sigma_y={cfg.sigma_y!r}, "
        f"sigma_v={cfg.sigma_v!r}, nuisance={cfg.nuisance_energy!r}x{cfg.nuisance_dims}, "
        f"nonlinear={cfg.nonlinear}, seed={cfg.seed}, snr={snr!r})"
    )
    dataset = EmbeddingDataset(
        features=v.astype(np.float32),
        targets=raw_targets,
        doc_ids=tuple(f"synth-{i:06d}" for i in range(n)),
        provenance=provenance,
    )
    dataset = apply_split(
        dataset,
        SplitSpec(mode="random", fractions=cfg.fractions, seed=derive_seed(cfg.seed, "synth-split")),
    )
    std = fit_standardizer(dataset.targets[dataset.split_indices("train")])
    dataset = dataset.with_targets(std.transform(dataset.targets))

    return SynthResult(
        dataset=dataset,
        latent=u,
        mixing=mixing,
        target_weights=w,
        signal=signal,
        raw_targets=raw_targets,
    )


def generate(cfg: SynthConfig) -> EmbeddingDataset:
    """Generate a standardized, split synthetic dataset."""
    return generate_with_latent(cfg).dataset


def generate_to_files(cfg: SynthConfig, emb_path, targets_path=None):
    """Generate and write in the interchange formats; returns the two paths."""
    dataset = generate(cfg)
    return save_embedding_file(dataset, emb_path, targets_path)
