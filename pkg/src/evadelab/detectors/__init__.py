"""Malware detectors trained on binary feature vectors.

Three model families share one train/predict surface: a linear SVM on the
raw binary encoding, a gradient-boosted tree ensemble on the raw encoding,
and a feed-forward network on a dense random projection.  `train` grows a
model from arrays, `predict` maps scores to labels under one shared
convention: a sample is called malicious only when its score is strictly
past the decision point (margin 0 for the SVM, probability 0.5 for the
others), so exact ties fall back to benign.
"""

from __future__ import annotations

from .api import (
    LABEL_BENIGN,
    LABEL_MALICIOUS,
    DetectorModel,
    TrainingConfig,
    decision_threshold,
    predict,
    predict_batch,
    score_batch,
    train,
)
from .io import load_model, save_model, serialize_model
from .gbt import TreeEnsemble
from .nn import MlpParameters, mlp_loss_and_gradients
from .svm import SvmParameters

__all__ = [
    "LABEL_BENIGN",
    "LABEL_MALICIOUS",
    "DetectorModel",
    "TrainingConfig",
    "TreeEnsemble",
    "MlpParameters",
    "SvmParameters",
    "decision_threshold",
    "load_model",
    "mlp_loss_and_gradients",
    "predict",
    "predict_batch",
    "save_model",
    "score_batch",
    "serialize_model",
    "train",
]
