"""Feed-forward binary classifier trained with Adam.

Hidden layers use ReLU, the output is a single logit, and the loss is the
mean binary cross-entropy computed from logits (softplus(z) - y*z) so no
probability ever reaches 0 or 1 exactly.  Gradients come from hand-rolled
backprop; `mlp_loss_and_gradients` exposes them so tests can compare
against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import TrainingDivergedError
from .gbt import sigmoid


@dataclass
class MlpParameters:
    layer_sizes: tuple[int, ...]  # (input, hidden..., 1)
    weights: list[np.ndarray]  # weights[k]: (layer_sizes[k+1], layer_sizes[k])
    biases: list[np.ndarray]  # biases[k]: (layer_sizes[k+1],)

    def logits(self, x: np.ndarray) -> np.ndarray:
        h = x
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w.T + b
            h = np.maximum(z, 0.0) if k < last else z
        return h[:, 0]

    def probabilities(self, x: np.ndarray) -> np.ndarray:
        return sigmoid(self.logits(x))


def init_mlp(layer_sizes: tuple[int, ...], seed: int) -> MlpParameters:
    if len(layer_sizes) < 2 or layer_sizes[-1] != 1:
        raise ValueError("layer sizes must end in a single output unit")
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        scale = np.sqrt(2.0 / fan_in)
        weights.append(rng.normal(0.0, scale, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out, dtype=np.float64))
    return MlpParameters(tuple(layer_sizes), weights, biases)


def mlp_loss_and_gradients(
    params: MlpParameters, x: np.ndarray, y01: np.ndarray
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Mean cross-entropy over the batch plus d(loss)/d(weights, biases)."""
    n = x.shape[0]
    last = len(params.weights) - 1
    activations = [x]
    pre_relu: list[np.ndarray] = []
    h = x
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T + b
        if k < last:
            pre_relu.append(z)
            h = np.maximum(z, 0.0)
            activations.append(h)
        else:
            logits = z[:, 0]
    softplus = np.maximum(logits, 0.0) + np.log1p(np.exp(-np.abs(logits)))
    loss = float(np.mean(softplus - y01 * logits))

    grad_w = [np.empty(0)] * len(params.weights)
    grad_b = [np.empty(0)] * len(params.biases)
    delta = ((sigmoid(logits) - y01) / n)[:, None]  # (n, 1)
    for k in range(last, -1, -1):
        grad_w[k] = delta.T @ activations[k]
        grad_b[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ params.weights[k]) * (pre_relu[k - 1] > 0.0)
    return loss, grad_w, grad_b


def train_mlp(
    x: np.ndarray,
    y01: np.ndarray,
    *,
    layer_sizes: tuple[int, ...],
    seed: int,
    epochs: int,
    batch_size: int,
    learning_rate: float,
    beta1: float,
    beta2: float,
    adam_eps: float,
) -> MlpParameters:
    params = init_mlp(layer_sizes, seed)
    y = y01.astype(np.float64)
    n = x.shape[0]
    m_w = [np.zeros_like(w) for w in params.weights]
    v_w = [np.zeros_like(w) for w in params.weights]
    m_b = [np.zeros_like(b) for b in params.biases]
    v_b = [np.zeros_like(b) for b in params.biases]
    rng = np.random.default_rng(seed + 1)
    step = 0
    for epoch in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            batch = order[start : start + batch_size]
            loss, grad_w, grad_b = mlp_loss_and_gradients(params, x[batch], y[batch])
            epoch_loss += loss * batch.shape[0]
            step += 1
            correction = np.sqrt(1.0 - beta2**step) / (1.0 - beta1**step)
            for k in range(len(params.weights)):
                m_w[k] = beta1 * m_w[k] + (1.0 - beta1) * grad_w[k]
                v_w[k] = beta2 * v_w[k] + (1.0 - beta2) * grad_w[k] ** 2
                params.weights[k] -= learning_rate * correction * m_w[k] / (
                    np.sqrt(v_w[k]) + adam_eps
                )
                m_b[k] = beta1 * m_b[k] + (1.0 - beta1) * grad_b[k]
                v_b[k] = beta2 * v_b[k] + (1.0 - beta2) * grad_b[k] ** 2
                params.biases[k] -= learning_rate * correction * m_b[k] / (
                    np.sqrt(v_b[k]) + adam_eps
                )
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(
                f"network loss became non-finite ({epoch_loss})", step=epoch
            )
    return params
