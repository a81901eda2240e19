"""Training plumbing shared by the autoencoder and the MLP head."""

from __future__ import annotations

import numpy as np

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class TrainingDivergedError(RuntimeError):
    """Non-finite loss encountered; carries the 1-based epoch index."""

    def __init__(self, epoch: int):
        super().__init__(f"non-finite training loss at epoch {epoch}")
        self.epoch = epoch


class Adam:
    """Adaptive-moment estimation with bias correction, updating in place."""

    def __init__(self, params: list[np.ndarray], lr: float = 1e-3):
        self.lr = lr
        self.t = 0
        self._m = [np.zeros_like(p) for p in params]
        self._v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1t = 1.0 - ADAM_BETA1**self.t
        b2t = 1.0 - ADAM_BETA2**self.t
        for p, g, m, v in zip(params, grads, self._m, self._v):
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * np.square(g)
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + ADAM_EPS)


class EarlyStopper:
    """Patience-based early stopping on validation loss.

    Improvement means a strict decrease; ties count against the patience
    budget. ``best_epoch`` is 1-based.
    """

    def __init__(self, patience: int):
        if patience < 1:
            raise ValueError("patience must be >= 1")
        self.patience = patience
        self.best = float("inf")
        self.best_epoch = 0
        self.streak = 0

    def update(self, val_loss: float, epoch: int) -> bool:
        """Record one epoch's validation loss; returns True on improvement."""
        if val_loss < self.best:
            self.best = val_loss
            self.best_epoch = epoch
            self.streak = 0
            return True
        self.streak += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.streak >= self.patience


def init_affine(rng: np.random.Generator, fan_in: int, fan_out: int):
    """Uniform +-1/sqrt(fan_in) weight and bias initialization."""
    bound = 1.0 / np.sqrt(fan_in)
    w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
    b = rng.uniform(-bound, bound, size=fan_out)
    return w, b


def stack_forward(params: list[np.ndarray], relu_flags: list[bool], x: np.ndarray):
    """Forward pass through affine layers; params alternate [W0, b0, W1, b1, ...].

    Returns (output, activations, preactivations) with activations[i] the
    input to layer i.
    """
    acts = [x]
    pre = []
    n_layers = len(params) // 2
    for i in range(n_layers):
        w, b = params[2 * i], params[2 * i + 1]
        z = acts[-1] @ w + b
        pre.append(z)
        acts.append(np.maximum(z, 0.0) if relu_flags[i] else z)
    return acts[-1], acts, pre


def stack_backward(
    params: list[np.ndarray],
    relu_flags: list[bool],
    acts: list[np.ndarray],
    pre: list[np.ndarray],
    d_out: np.ndarray,
) -> list[np.ndarray]:
    """Backpropagate d_loss/d_output; returns gradients aligned with params."""
    n_layers = len(params) // 2
    grads: list[np.ndarray | None] = [None] * len(params)
    d = d_out
    for i in reversed(range(n_layers)):
        if relu_flags[i]:
            d = d * (pre[i] > 0)
        w = params[2 * i]
        grads[2 * i] = acts[i].T @ d
        grads[2 * i + 1] = d.sum(axis=0)
        d = d @ w.T
    return grads  # type: ignore[return-value]
