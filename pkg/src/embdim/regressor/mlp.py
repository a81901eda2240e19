"""Three-layer MLP regression head trained on the Huber loss.

Kept despite its poor published track record on noisy returns data, so the
negative result stays reproducible. Dropout is active only during training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import derive_seed, make_rng
from ..training import Adam, EarlyStopper, TrainingDivergedError, init_affine


@dataclass(frozen=True)
class MLPConfig:
    hidden_dim: int = 64
    dropout: float = 0.0
    huber_delta: float = 1.0
    patience: int = 5
    max_epochs: int = 100
    batch_size: int = 256
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.huber_delta <= 0:
            raise ValueError("huber_delta must be positive")
        if not self.patience < self.max_epochs:
            raise ValueError("patience must be smaller than max_epochs")


@dataclass
class MLPModel:
    """params = [W1, b1, W2, b2, W3, b3]; W of shape (in, out), output width 1."""

    input_dim: int
    hidden_dim: int
    params: list[np.ndarray]


@dataclass
class MlpTrainReport:
    train_losses: list[float]
    val_losses: list[float]
    best_epoch: int  # 1-based
    stopped_early: bool


def _huber_terms(residual: np.ndarray, delta: float) -> np.ndarray:
    a = np.abs(residual)
    return np.where(a <= delta, 0.5 * residual * residual, delta * (a - 0.5 * delta))


def _huber_psi(residual: np.ndarray, delta: float) -> np.ndarray:
    """Derivative of the Huber term with respect to the residual."""
    return np.clip(residual, -delta, delta)


def init_mlp(input_dim: int, hidden_dim: int, seed: int) -> MLPModel:
    rng = make_rng(derive_seed(seed, "mlp-init"))
    params: list[np.ndarray] = []
    for a, b in ((input_dim, hidden_dim), (hidden_dim, hidden_dim), (hidden_dim, 1)):
        w, bias = init_affine(rng, a, b)
        params += [w, bias]
    return MLPModel(input_dim=input_dim, hidden_dim=hidden_dim, params=params)


def _forward(params, x, dropout: float = 0.0, rng: np.random.Generator | None = None):
    w1, b1, w2, b2, w3, b3 = params
    z1 = x @ w1 + b1
    a1 = np.maximum(z1, 0.0)
    if dropout > 0.0:
        m1 = (rng.random(a1.shape) >= dropout) / (1.0 - dropout)
        a1 = a1 * m1
    else:
        m1 = None
    z2 = a1 @ w2 + b2
    a2 = np.maximum(z2, 0.0)
    if dropout > 0.0:
        m2 = (rng.random(a2.shape) >= dropout) / (1.0 - dropout)
        a2 = a2 * m2
    else:
        m2 = None
    yhat = (a2 @ w3 + b3)[:, 0]
    return yhat, (x, z1, a1, m1, z2, a2, m2)


def mlp_loss(model: MLPModel, x: np.ndarray, y: np.ndarray, delta: float) -> float:
    yhat, _ = _forward(model.params, x)
    return float(np.mean(_huber_terms(y - yhat, delta)))


def loss_gradients(model: MLPModel, x: np.ndarray, y: np.ndarray, delta: float):
    """Analytic Huber-loss gradients with dropout disabled."""
    params = model.params
    w1, b1, w2, b2, w3, b3 = params
    yhat, (x0, z1, a1, _, z2, a2, _) = _forward(params, x)
    n = x.shape[0]
    residual = y - yhat
    loss = float(np.mean(_huber_terms(residual, delta)))
    d_yhat = (-_huber_psi(residual, delta) / n)[:, None]
    g_w3 = a2.T @ d_yhat
    g_b3 = d_yhat.sum(axis=0)
    d2 = (d_yhat @ w3.T) * (z2 > 0)
    g_w2 = a1.T @ d2
    g_b2 = d2.sum(axis=0)
    d1 = (d2 @ w2.T) * (z1 > 0)
    g_w1 = x0.T @ d1
    g_b1 = d1.sum(axis=0)
    return loss, [g_w1, g_b1, g_w2, g_b2, g_w3, g_b3]


def mlp_fit(
    x: np.ndarray,
    y: np.ndarray,
    cfg: MLPConfig,
    x_val: np.ndarray,
    y_val: np.ndarray,
) -> tuple[MLPModel, MlpTrainReport]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    x_val = np.asarray(x_val, dtype=np.float64)
    y_val = np.asarray(y_val, dtype=np.float64)
    if x.shape[0] == 0 or x_val.shape[0] == 0:
        raise ValueError("train and val splits must be non-empty")
    n = x.shape[0]

    model = init_mlp(x.shape[1], cfg.hidden_dim, cfg.seed)
    params = model.params
    opt = Adam(params, lr=cfg.learning_rate)
    stopper = EarlyStopper(cfg.patience)
    shuffle_rng = make_rng(derive_seed(cfg.seed, "mlp-shuffle"))
    dropout_rng = make_rng(derive_seed(cfg.seed, "mlp-dropout"))

    train_losses: list[float] = []
    val_losses: list[float] = []
    best_params = [p.copy() for p in params]
    stopped_early = False

    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle_rng.permutation(n)
        batch_losses = []
        for start in range(0, n, cfg.batch_size):
            bi = order[start : start + cfg.batch_size]
            xb, yb = x[bi], y[bi]
            w1, b1, w2, b2, w3, b3 = params
            yhat, (x0, z1, a1, m1, z2, a2, m2) = _forward(
                params, xb, dropout=cfg.dropout, rng=dropout_rng
            )
            residual = yb - yhat
            loss = float(np.mean(_huber_terms(residual, cfg.huber_delta)))
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
            d_yhat = (-_huber_psi(residual, cfg.huber_delta) / xb.shape[0])[:, None]
            g_w3 = a2.T @ d_yhat
            g_b3 = d_yhat.sum(axis=0)
            d2 = (d_yhat @ w3.T) * (z2 > 0)
            if m2 is not None:
                d2 = d2 * m2
            g_w2 = a1.T @ d2
            g_b2 = d2.sum(axis=0)
            d1 = (d2 @ w2.T) * (z1 > 0)
            if m1 is not None:
                d1 = d1 * m1
            g_w1 = x0.T @ d1
            g_b1 = d1.sum(axis=0)
            opt.step(params, [g_w1, g_b1, g_w2, g_b2, g_w3, g_b3])
            batch_losses.append(loss)
        train_losses.append(float(np.mean(batch_losses)))
        val_loss = mlp_loss(model, x_val, y_val, cfg.huber_delta)
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
    report = MlpTrainReport(
        train_losses=train_losses,
        val_losses=val_losses,
        best_epoch=stopper.best_epoch,
        stopped_early=stopped_early,
    )
    return model, report


def mlp_predict(model: MLPModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ValueError(f"expected (N, {model.input_dim}) inputs, got {x.shape}")
    yhat, _ = _forward(model.params, x)  # dropout disabled at inference
    return yhat


def mlp_gradient_check(
    model: MLPModel,
    x: np.ndarray,
    y: np.ndarray,
    delta: float = 1.0,
    step: float = 1e-4,
    max_coords: int = 60,
    seed: int = 0,
) -> float:
    """Max relative deviation between analytic and central-difference gradients."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _, grads = loss_gradients(model, x, y, delta)
    rng = make_rng(derive_seed(seed, "mlp-gradcheck"))
    worst = 0.0
    for p, g in zip(model.params, grads):
        flat_p = p.reshape(-1)
        flat_g = np.asarray(g).reshape(-1)
        k = min(max_coords, flat_p.size)
        coords = rng.choice(flat_p.size, size=k, replace=False)
        for c in coords:
            orig = flat_p[c]
            flat_p[c] = orig + step
            up = mlp_loss(model, x, y, delta)
            flat_p[c] = orig - step
            down = mlp_loss(model, x, y, delta)
            flat_p[c] = orig
            numeric = (up - down) / (2.0 * step)
            analytic = flat_g[c]
            scale = max(abs(analytic), abs(numeric))
            err = abs(analytic - numeric) if scale < 1e-6 else abs(analytic - numeric) / scale
            worst = max(worst, err)
    return worst
