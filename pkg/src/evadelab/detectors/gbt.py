"""Gradient-boosted decision trees for binary classification.

Boosting follows the classic logistic-loss recipe: each round fits a
regression tree to the current negative gradients (y - p) by variance
reduction, then assigns leaf values with a single damped Newton step
sum(g)/sum(h) where h = p(1-p).  Trees are stored as flat parallel arrays
so prediction is a vectorized pointer chase and serialization is exact.

When every feature value is 0 or 1 the split search collapses to a single
candidate threshold per column and runs as one matrix product per node;
non-binary inputs fall back to exhaustive midpoint enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingDivergedError

LEAF = -1
MAX_LEAF_VALUE = 4.0


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_loss(raw: np.ndarray, y: np.ndarray) -> float:
    # softplus(raw) - y*raw, computed without overflow for large |raw|.
    softplus = np.maximum(raw, 0.0) + np.log1p(np.exp(-np.abs(raw)))
    return float(np.mean(softplus - y * raw))


@dataclass
class Tree:
    feature: np.ndarray  # int32, LEAF for leaves
    threshold: np.ndarray  # float64
    left: np.ndarray  # int32, child node index
    right: np.ndarray  # int32
    value: np.ndarray  # float64, leaf payout

    def predict(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(x.shape[0], dtype=np.int64)
        while True:
            internal = self.feature[node] != LEAF
            if not internal.any():
                break
            idx = np.nonzero(internal)[0]
            at = node[idx]
            goes_left = x[idx, self.feature[at]] <= self.threshold[at]
            node[idx] = np.where(goes_left, self.left[at], self.right[at])
        return self.value[node]

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]


class _TreeBuilder:
    """Grows one tree on (gradients, hessians) up to a depth limit."""

    def __init__(self, x: np.ndarray, grad: np.ndarray, hess: np.ndarray,
                 max_depth: int, binary_mode: bool):
        self.x = x
        self.grad = grad
        self.hess = hess
        self.max_depth = max_depth
        self.binary_mode = binary_mode
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def build(self) -> Tree:
        self._grow(np.arange(self.x.shape[0]), 0)
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            value=np.asarray(self.value, dtype=np.float64),
        )

    def _new_node(self) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(0.0)
        return len(self.feature) - 1

    def _leaf_value(self, idx: np.ndarray) -> float:
        g = float(self.grad[idx].sum())
        h = float(self.hess[idx].sum())
        return float(np.clip(g / max(h, 1e-12), -MAX_LEAF_VALUE, MAX_LEAF_VALUE))

    def _grow(self, idx: np.ndarray, depth: int) -> int:
        node = self._new_node()
        if depth >= self.max_depth or idx.shape[0] < 2:
            self.value[node] = self._leaf_value(idx)
            return node
        split = (self._best_split_binary(idx) if self.binary_mode
                 else self._best_split_generic(idx))
        if split is None:
            self.value[node] = self._leaf_value(idx)
            return node
        feature, threshold = split
        goes_left = self.x[idx, feature] <= threshold
        self.feature[node] = feature
        self.threshold[node] = threshold
        left_child = self._grow(idx[goes_left], depth + 1)
        right_child = self._grow(idx[~goes_left], depth + 1)
        self.left[node] = left_child
        self.right[node] = right_child
        return node

    def _best_split_binary(self, idx: np.ndarray) -> tuple[int, float] | None:
        xn = self.x[idx]
        g = self.grad[idx]
        n = idx.shape[0]
        total_g = g.sum()
        on_count = xn.sum(axis=0)
        on_g = xn.T @ g
        n_right = on_count
        n_left = n - on_count
        valid = (n_left > 0) & (n_right > 0)
        if not valid.any():
            return None
        sum_left = total_g - on_g
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = sum_left**2 / n_left + on_g**2 / n_right
        parent = total_g**2 / n
        gain = np.where(valid, gain, -np.inf)
        best = int(np.argmax(gain))
        if gain[best] <= parent + 1e-12:
            return None
        return best, 0.5

    def _best_split_generic(self, idx: np.ndarray) -> tuple[int, float] | None:
        g = self.grad[idx]
        n = idx.shape[0]
        total_g = g.sum()
        parent = total_g**2 / n
        best_gain = parent + 1e-12
        best: tuple[int, float] | None = None
        for feature in range(self.x.shape[1]):
            col = self.x[idx, feature]
            values = np.unique(col)
            if values.shape[0] < 2:
                continue
            for cut in (values[:-1] + values[1:]) / 2.0:
                goes_left = col <= cut
                n_left = int(goes_left.sum())
                n_right = n - n_left
                if n_left == 0 or n_right == 0:
                    continue
                sum_left = g[goes_left].sum()
                sum_right = total_g - sum_left
                gain = sum_left**2 / n_left + sum_right**2 / n_right
                if gain > best_gain:
                    best_gain = gain
                    best = (feature, float(cut))
        return best


@dataclass
class TreeEnsemble:
    trees: list[Tree]
    base_score: float
    learning_rate: float
    round_losses: np.ndarray = field(default_factory=lambda: np.empty(0))

    def raw_scores(self, x: np.ndarray) -> np.ndarray:
        raw = np.full(x.shape[0], self.base_score, dtype=np.float64)
        for tree in self.trees:
            raw += self.learning_rate * tree.predict(x)
        return raw

    def probabilities(self, x: np.ndarray) -> np.ndarray:
        return sigmoid(self.raw_scores(x))


def train_gbt(
    x: np.ndarray,
    y01: np.ndarray,
    *,
    n_trees: int,
    max_depth: int,
    learning_rate: float,
) -> TreeEnsemble:
    y = y01.astype(np.float64)
    n = x.shape[0]
    prior = float(np.clip(y.mean(), 1e-9, 1.0 - 1e-9))
    base = float(np.log(prior / (1.0 - prior)))
    raw = np.full(n, base, dtype=np.float64)
    binary_mode = bool(np.isin(x, (0.0, 1.0)).all())
    trees: list[Tree] = []
    losses: list[float] = []
    for round_index in range(n_trees):
        p = sigmoid(raw)
        grad = y - p
        hess = p * (1.0 - p)
        tree = _TreeBuilder(x, grad, hess, max_depth, binary_mode).build()
        raw += learning_rate * tree.predict(x)
        loss = logistic_loss(raw, y)
        if not np.isfinite(loss):
            raise TrainingDivergedError(
                f"boosting loss became non-finite ({loss})", step=round_index
            )
        trees.append(tree)
        losses.append(loss)
    return TreeEnsemble(trees, base, learning_rate, np.asarray(losses))
