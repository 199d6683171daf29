"""Shared train/predict surface over the three detector families."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..projection import ProjectionSpec
from .gbt import TreeEnsemble, train_gbt
from .nn import MlpParameters, train_mlp
from .svm import SvmParameters, train_svm

LABEL_BENIGN = 0
LABEL_MALICIOUS = 1

KINDS = ("svm", "gbt", "nn")


@dataclass(frozen=True)
class TrainingConfig:
    seed: int = 0
    svm_epochs: int = 15
    svm_learning_rate: float = 0.1
    svm_regularization: float = 1.0
    gbt_trees: int = 100
    gbt_depth: int = 4
    gbt_learning_rate: float = 0.1
    nn_hidden: tuple[int, ...] = (240, 120, 60)
    nn_epochs: int = 10
    nn_batch_size: int = 32
    nn_learning_rate: float = 1e-3
    nn_beta1: float = 0.9
    nn_beta2: float = 0.999
    nn_adam_eps: float = 1e-8

    def with_seed(self, seed: int) -> "TrainingConfig":
        return replace(self, seed=seed)


@dataclass
class DetectorModel:
    kind: str
    input_dim: int
    config: TrainingConfig
    params: SvmParameters | TreeEnsemble | MlpParameters
    train_accuracy: float
    projection: ProjectionSpec | None = None


def decision_threshold(kind: str) -> float:
    return 0.0 if kind == "svm" else 0.5


def _check_training_inputs(x: np.ndarray, y: np.ndarray) -> None:
    if x.ndim != 2:
        raise ValueError(f"feature matrix must be 2-D, got shape {x.shape}")
    if y.shape != (x.shape[0],):
        raise ValueError(
            f"labels must be one per row: {y.shape} vs {x.shape[0]} rows"
        )
    if x.shape[0] == 0:
        raise ValueError("cannot train on an empty dataset")
    present = set(np.unique(y).tolist())
    if not present <= {0, 1}:
        raise ValueError(f"labels must be 0 or 1, found {sorted(present)}")
    if len(present) < 2:
        raise ValueError("training set must contain both classes")


def train(
    kind: str,
    x: np.ndarray,
    y: np.ndarray,
    config: TrainingConfig,
    *,
    projection: ProjectionSpec | None = None,
) -> DetectorModel:
    """Fit one detector on encoded rows ``x`` and 0/1 labels ``y``.

    ``x`` is the representation the model consumes directly; callers that
    project inputs first should pass the projection spec so the model
    records how future samples must be prepared.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown detector kind {kind!r}, expected one of {KINDS}")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    _check_training_inputs(x, y)
    if projection is not None and projection.output_dim != x.shape[1]:
        raise ValueError(
            f"projection output dim {projection.output_dim} does not match "
            f"feature matrix width {x.shape[1]}"
        )
    if kind == "svm":
        params: SvmParameters | TreeEnsemble | MlpParameters = train_svm(
            x,
            y,
            seed=config.seed,
            epochs=config.svm_epochs,
            learning_rate=config.svm_learning_rate,
            regularization=config.svm_regularization,
        )
    elif kind == "gbt":
        params = train_gbt(
            x,
            y,
            n_trees=config.gbt_trees,
            max_depth=config.gbt_depth,
            learning_rate=config.gbt_learning_rate,
        )
    else:
        params = train_mlp(
            x,
            y,
            layer_sizes=(x.shape[1], *config.nn_hidden, 1),
            seed=config.seed,
            epochs=config.nn_epochs,
            batch_size=config.nn_batch_size,
            learning_rate=config.nn_learning_rate,
            beta1=config.nn_beta1,
            beta2=config.nn_beta2,
            adam_eps=config.nn_adam_eps,
        )
    model = DetectorModel(kind, x.shape[1], config, params, 0.0, projection)
    labels, _ = predict_batch(model, x)
    model.train_accuracy = float((labels == y).mean())
    return model


def score_batch(model: DetectorModel, x: np.ndarray) -> np.ndarray:
    """SVM margin, or malicious-class probability for gbt and nn."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ValueError(
            f"expected shape (n, {model.input_dim}), got {x.shape}"
        )
    if isinstance(model.params, SvmParameters):
        return model.params.margins(x)
    return model.params.probabilities(x)


def predict_batch(model: DetectorModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    scores = score_batch(model, x)
    labels = (scores > decision_threshold(model.kind)).astype(np.int64)
    return labels, scores


def predict(model: DetectorModel, x: np.ndarray) -> tuple[int, float]:
    labels, scores = predict_batch(model, np.asarray(x, dtype=np.float64)[None, :])
    return int(labels[0]), float(scores[0])
