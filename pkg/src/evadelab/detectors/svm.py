"""Linear SVM trained by stochastic subgradient descent on the primal.

Objective: mean_i hinge(y_i (w.x_i + b)) + lam * ||w||^2 with y in {-1,+1}.
Updates visit samples one at a time in a seeded shuffle, so a fixed
(dataset, config) pair always produces identical weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import TrainingDivergedError


@dataclass
class SvmParameters:
    weights: np.ndarray  # float64, shape (input_dim,)
    bias: float
    regularization: float

    def margins(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weights + self.bias


def svm_objective(params: SvmParameters, x: np.ndarray, y01: np.ndarray) -> float:
    y = 2.0 * y01 - 1.0
    hinge = np.maximum(0.0, 1.0 - y * params.margins(x))
    return float(hinge.mean() + params.regularization * params.weights @ params.weights)


def train_svm(
    x: np.ndarray,
    y01: np.ndarray,
    *,
    seed: int,
    epochs: int,
    learning_rate: float,
    regularization: float,
) -> SvmParameters:
    """Per-sample subgradient steps with a 1/t schedule for strong convexity.

    The step size is eta_t = 1 / (2*lam*(t + warmup)) with warmup chosen so
    eta_1 equals the configured learning rate.  For sizable lam this is the
    classic averaging schedule for lam-strongly-convex objectives (the step
    shrinkage 2*lam*eta_t is exactly 1/(t+warmup), so weights become a
    running average of hinge subgradients); for tiny lam it degrades
    gracefully into near-constant-rate SGD at the configured rate.
    """
    n, dim = x.shape
    y = 2.0 * y01.astype(np.float64) - 1.0
    w = np.zeros(dim, dtype=np.float64)
    b = 0.0
    warmup = max(0.0, 1.0 / (2.0 * regularization * learning_rate) - 1.0)
    rng = np.random.default_rng(seed)
    step = 0
    for epoch in range(epochs):
        for i in rng.permutation(n):
            step += 1
            eta = 1.0 / (2.0 * regularization * (step + warmup))
            xi = x[i]
            keep = 1.0 - 2.0 * regularization * eta
            if y[i] * (xi @ w + b) < 1.0:
                w *= keep
                w += eta * y[i] * xi
                b += eta * y[i]  # bias is unregularized
            else:
                w *= keep
        params = SvmParameters(w, b, regularization)
        objective = svm_objective(params, x, y01)
        if not np.isfinite(objective):
            raise TrainingDivergedError(
                f"svm objective became non-finite ({objective})", step=epoch
            )
    return SvmParameters(w, float(b), regularization)
