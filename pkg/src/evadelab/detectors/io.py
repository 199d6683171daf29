"""Byte-stable persistence for trained detectors.

Identical models serialize to identical bytes, so reproducibility checks
can compare files directly instead of re-deriving predictions.
"""

from __future__ import annotations

from dataclasses import asdict
from pathlib import Path

import numpy as np

from .. import arrayio
from ..projection import ProjectionSpec
from .api import DetectorModel, TrainingConfig
from .gbt import Tree, TreeEnsemble
from .nn import MlpParameters
from .svm import SvmParameters

FORMAT_NAME = "evadelab-detector"
FORMAT_VERSION = 1


def serialize_model(model: DetectorModel) -> bytes:
    meta: dict = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "kind": model.kind,
        "input_dim": model.input_dim,
        "train_accuracy": model.train_accuracy,
        "config": asdict(model.config),
        "projection": None,
    }
    if model.projection is not None:
        meta["projection"] = {
            "seed": model.projection.seed,
            "input_dim": model.projection.input_dim,
            "output_dim": model.projection.output_dim,
            "density": model.projection.density,
        }
    arrays: dict[str, np.ndarray] = {}
    params = model.params
    if isinstance(params, SvmParameters):
        meta["bias"] = params.bias
        meta["regularization"] = params.regularization
        arrays["weights"] = params.weights
    elif isinstance(params, TreeEnsemble):
        meta["base_score"] = params.base_score
        meta["learning_rate"] = params.learning_rate
        meta["n_trees"] = len(params.trees)
        arrays["round_losses"] = params.round_losses
        for k, tree in enumerate(params.trees):
            prefix = f"tree{k:05d}_"
            arrays[prefix + "feature"] = tree.feature
            arrays[prefix + "threshold"] = tree.threshold
            arrays[prefix + "left"] = tree.left
            arrays[prefix + "right"] = tree.right
            arrays[prefix + "value"] = tree.value
    elif isinstance(params, MlpParameters):
        meta["layer_sizes"] = list(params.layer_sizes)
        for k, (w, b) in enumerate(zip(params.weights, params.biases)):
            arrays[f"w{k:03d}"] = w
            arrays[f"b{k:03d}"] = b
    else:
        raise TypeError(f"unknown parameter container {type(params).__name__}")
    return arrayio.pack(meta, arrays)


def deserialize_model(data: bytes) -> DetectorModel:
    meta, arrays = arrayio.unpack(data)
    if meta.get("format") != FORMAT_NAME:
        raise ValueError("not a detector model file")
    config_dict = dict(meta["config"])
    config_dict["nn_hidden"] = tuple(config_dict["nn_hidden"])
    config = TrainingConfig(**config_dict)
    projection = None
    if meta["projection"] is not None:
        p = meta["projection"]
        projection = ProjectionSpec(
            seed=p["seed"],
            input_dim=p["input_dim"],
            output_dim=p["output_dim"],
            density=p["density"],
        )
    kind = meta["kind"]
    if kind == "svm":
        params: SvmParameters | TreeEnsemble | MlpParameters = SvmParameters(
            weights=arrays["weights"],
            bias=meta["bias"],
            regularization=meta["regularization"],
        )
    elif kind == "gbt":
        trees = []
        for k in range(meta["n_trees"]):
            prefix = f"tree{k:05d}_"
            trees.append(
                Tree(
                    feature=arrays[prefix + "feature"],
                    threshold=arrays[prefix + "threshold"],
                    left=arrays[prefix + "left"],
                    right=arrays[prefix + "right"],
                    value=arrays[prefix + "value"],
                )
            )
        params = TreeEnsemble(
            trees=trees,
            base_score=meta["base_score"],
            learning_rate=meta["learning_rate"],
            round_losses=arrays["round_losses"],
        )
    elif kind == "nn":
        sizes = tuple(meta["layer_sizes"])
        n_layers = len(sizes) - 1
        params = MlpParameters(
            layer_sizes=sizes,
            weights=[arrays[f"w{k:03d}"] for k in range(n_layers)],
            biases=[arrays[f"b{k:03d}"] for k in range(n_layers)],
        )
    else:
        raise ValueError(f"unknown detector kind {kind!r}")
    return DetectorModel(
        kind=kind,
        input_dim=meta["input_dim"],
        config=config,
        params=params,
        train_accuracy=meta["train_accuracy"],
        projection=projection,
    )


def save_model(model: DetectorModel, path: str | Path) -> None:
    Path(path).write_bytes(serialize_model(model))


def load_model(path: str | Path) -> DetectorModel:
    return deserialize_model(Path(path).read_bytes())
