"""Encoder/decoder pair compressing embeddings under reconstruction MSE.

The default architecture is a single affine encoder and a single affine
decoder; ``hidden`` inserts symmetric ReLU hidden layers on both sides.
The latent output and the reconstruction output are always linear.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import EmbeddingDataset, derive_seed, make_rng
from .training import (
    Adam,
    EarlyStopper,
    TrainingDivergedError,
    init_affine,
    stack_forward,
    stack_backward,
)


@dataclass(frozen=True)
class AeTrainConfig:
    max_epochs: int = 100
    patience: int = 5
    batch_size: int = 256
    learning_rate: float = 1e-3
    hidden: tuple[int, ...] = ()  # symmetric ReLU hidden widths
    seed: int = 0

    def __post_init__(self):
        if self.max_epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("bad training config")
        if not self.patience < self.max_epochs:
            raise ValueError("patience must be smaller than max_epochs")


@dataclass
class AutoencoderModel:
    """Affine layer stacks; params alternate [W, b] per layer, W of shape (in, out)."""

    input_dim: int
    latent_dim: int
    encoder: list[np.ndarray]
    decoder: list[np.ndarray]

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        for p in self.encoder + self.decoder:
            if not np.all(np.isfinite(p)):
                raise ValueError("model parameters must be finite")

    @property
    def encoder_relu_flags(self) -> list[bool]:
        n = len(self.encoder) // 2
        return [i < n - 1 for i in range(n)]

    @property
    def decoder_relu_flags(self) -> list[bool]:
        n = len(self.decoder) // 2
        return [i < n - 1 for i in range(n)]


@dataclass
class AeTrainReport:
    train_losses: list[float]
    val_losses: list[float]
    best_epoch: int  # 1-based
    stopped_early: bool
    overcomplete: bool  # latent_dim > input_dim

    @property
    def best_val_loss(self) -> float:
        return min(self.val_losses)


def init_model(input_dim: int, latent_dim: int, hidden: tuple[int, ...], seed: int) -> AutoencoderModel:
    rng = make_rng(derive_seed(seed, "ae-init"))
    enc_dims = [input_dim, *hidden, latent_dim]
    dec_dims = [latent_dim, *reversed(hidden), input_dim]
    encoder: list[np.ndarray] = []
    decoder: list[np.ndarray] = []
    for a, b in zip(enc_dims[:-1], enc_dims[1:]):
        w, bias = init_affine(rng, a, b)
        encoder += [w, bias]
    for a, b in zip(dec_dims[:-1], dec_dims[1:]):
        w, bias = init_affine(rng, a, b)
        decoder += [w, bias]
    return AutoencoderModel(input_dim=input_dim, latent_dim=latent_dim, encoder=encoder, decoder=decoder)


def _combined(model: AutoencoderModel):
    params = model.encoder + model.decoder
    flags = model.encoder_relu_flags + model.decoder_relu_flags
    return params, flags


def reconstruction_loss(model: AutoencoderModel, batch: np.ndarray) -> float:
    """Mean over samples of the squared reconstruction error."""
    params, flags = _combined(model)
    out, _, _ = stack_forward(params, flags, batch)
    diff = out - batch
    return float(np.mean(np.sum(diff * diff, axis=1)))


def loss_gradients(model: AutoencoderModel, batch: np.ndarray):
    """Analytic gradient of the reconstruction loss for every parameter."""
    params, flags = _combined(model)
    out, acts, pre = stack_forward(params, flags, batch)
    d_out = 2.0 * (out - batch) / batch.shape[0]
    grads = stack_backward(params, flags, acts, pre, d_out)
    diff = out - batch
    loss = float(np.mean(np.sum(diff * diff, axis=1)))
    return loss, grads


def ae_train(
    dataset: EmbeddingDataset, cfg: AeTrainConfig, d_z: int
) -> tuple[AutoencoderModel, AeTrainReport]:
    """Train on the dataset's train split with val-split early stopping."""
    dataset.require_splits()
    x_train = dataset.features[dataset.split_indices("train")].astype(np.float64)
    x_val = dataset.features[dataset.split_indices("val")].astype(np.float64)
    return ae_train_arrays(x_train, x_val, cfg, d_z)


def ae_train_arrays(
    x_train: np.ndarray, x_val: np.ndarray, cfg: AeTrainConfig, d_z: int
) -> tuple[AutoencoderModel, AeTrainReport]:
    if d_z < 1:
        raise ValueError("d_z must be >= 1")
    x_train = np.asarray(x_train, dtype=np.float64)
    x_val = np.asarray(x_val, dtype=np.float64)
    if x_train.shape[0] == 0 or x_val.shape[0] == 0:
        raise ValueError("train and val splits must be non-empty")
    n, dim = x_train.shape

    model = init_model(dim, d_z, cfg.hidden, cfg.seed)
    params, flags = _combined(model)
    opt = Adam(params, lr=cfg.learning_rate)
    stopper = EarlyStopper(cfg.patience)
    shuffle_rng = make_rng(derive_seed(cfg.seed, "ae-shuffle"))

    train_losses: list[float] = []
    val_losses: list[float] = []
    best_params = [p.copy() for p in params]
    stopped_early = False

    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle_rng.permutation(n)
        batch_losses = []
        for start in range(0, n, cfg.batch_size):
            batch = x_train[order[start : start + cfg.batch_size]]
            out, acts, pre = stack_forward(params, flags, batch)
            diff = out - batch
            loss = float(np.mean(np.sum(diff * diff, axis=1)))
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
            d_out = 2.0 * diff / batch.shape[0]
            grads = stack_backward(params, flags, acts, pre, d_out)
            opt.step(params, grads)
            batch_losses.append(loss)
        train_losses.append(float(np.mean(batch_losses)))
        val_loss = reconstruction_loss(model, x_val)
        if not np.isfinite(val_loss):
            raise TrainingDivergedError(epoch)
        val_losses.append(val_loss)
        if stopper.update(val_loss, epoch):
            best_params = [p.copy() for p in params]
        if stopper.should_stop:
            stopped_early = True
            break

    for p, best in zip(params, best_params):
        p[...] = best
    report = AeTrainReport(
        train_losses=train_losses,
        val_losses=val_losses,
        best_epoch=stopper.best_epoch,
        stopped_early=stopped_early,
        overcomplete=d_z > dim,
    )
    return model, report


def ae_encode(model: AutoencoderModel, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    single = v.ndim == 1
    x = v[None, :] if single else v
    if x.shape[1] != model.input_dim:
        raise ValueError(f"expected dimension {model.input_dim}, got {x.shape[1]}")
    out, _, _ = stack_forward(model.encoder, model.encoder_relu_flags, x)
    return out[0] if single else out


def ae_decode(model: AutoencoderModel, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    x = z[None, :] if single else z
    if x.shape[1] != model.latent_dim:
        raise ValueError(f"expected dimension {model.latent_dim}, got {x.shape[1]}")
    out, _, _ = stack_forward(model.decoder, model.decoder_relu_flags, x)
    return out[0] if single else out


def ae_gradient_check(
    model: AutoencoderModel,
    batch: np.ndarray,
    step: float = 1e-4,
    max_coords: int = 60,
    seed: int = 0,
) -> float:
    """Max relative deviation between analytic and central-difference gradients.

    Checks a random subsample of parameter coordinates; coordinates where
    both gradients are below 1e-6 in magnitude are compared absolutely.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[0] == 0:
        raise ValueError("batch must be a non-empty matrix")
    params, _ = _combined(model)
    _, grads = loss_gradients(model, batch)
    rng = make_rng(derive_seed(seed, "ae-gradcheck"))
    worst = 0.0
    for p, g in zip(params, grads):
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        k = min(max_coords, flat_p.size)
        coords = rng.choice(flat_p.size, size=k, replace=False)
        for c in coords:
            orig = flat_p[c]
            flat_p[c] = orig + step
            up = reconstruction_loss(model, batch)
            flat_p[c] = orig - step
            down = reconstruction_loss(model, batch)
            flat_p[c] = orig
            numeric = (up - down) / (2.0 * step)
            analytic = flat_g[c]
            scale = max(abs(analytic), abs(numeric))
            err = abs(analytic - numeric) if scale < 1e-6 else abs(analytic - numeric) / scale
            worst = max(worst, err)
    return worst
