"""Datasets as directories of feature files plus a manifest.

The on-disk layout is deliberately boring: one feature file per sample,
a ``manifest.txt`` listing relative paths (one per line, ``#`` comments
allowed), nothing else.  Sample ids are the manifest paths without the
``.features`` suffix, so ids stay stable under directory moves.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import MalformedInputError
from .features import (
    LABELS,
    FeatureSet,
    FeatureVocabulary,
    encode,
    parse_feature_file,
    serialize_feature_file,
)

MANIFEST_NAME = "manifest.txt"
SAMPLE_SUFFIX = ".features"


@dataclass(frozen=True)
class DatasetSample:
    sample_id: str
    features: FeatureSet
    label: str  # "benign" | "malicious"

    def __post_init__(self) -> None:
        if self.label not in LABELS:
            raise ValueError(f"unknown label {self.label!r}")
        if not self.sample_id or "\\" in self.sample_id:
            raise ValueError(f"bad sample id {self.sample_id!r}")

    @property
    def label_index(self) -> int:
        return LABELS.index(self.label)


class Dataset:
    """An ordered collection of samples with unique ids."""

    def __init__(self, samples: Iterable[DatasetSample]):
        self.samples = tuple(samples)
        index: dict[str, DatasetSample] = {}
        for s in self.samples:
            if s.sample_id in index:
                raise ValueError(f"duplicate sample id {s.sample_id!r}")
            index[s.sample_id] = s
        self._by_id = index

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[DatasetSample]:
        return iter(self.samples)

    def __getitem__(self, sample_id: str) -> DatasetSample:
        return self._by_id[sample_id]

    def __contains__(self, sample_id: str) -> bool:
        return sample_id in self._by_id

    def ids(self) -> list[str]:
        return [s.sample_id for s in self.samples]

    def labels(self) -> np.ndarray:
        return np.array([s.label_index for s in self.samples], dtype=np.float64)

    def feature_sets(self) -> list[FeatureSet]:
        return [s.features for s in self.samples]

    def subset(self, sample_ids: Iterable[str]) -> "Dataset":
        """A new dataset holding the named samples, in the given order."""
        return Dataset(self._by_id[i] for i in sample_ids)


def write_dataset(root: str | Path, dataset: Dataset) -> Path:
    """Write every sample and the manifest under ``root``; returns the manifest path."""
    rootp = Path(root)
    rootp.mkdir(parents=True, exist_ok=True)
    lines = []
    for sample in dataset:
        rel = sample.sample_id + SAMPLE_SUFFIX
        target = rootp / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(
            serialize_feature_file(sample.features, sample.label), encoding="utf-8"
        )
        lines.append(rel)
    manifest = rootp / MANIFEST_NAME
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest


def load_dataset(root: str | Path) -> Dataset:
    rootp = Path(root)
    manifest = rootp / MANIFEST_NAME
    if not manifest.is_file():
        raise MalformedInputError(f"no {MANIFEST_NAME} in {rootp}")
    samples = []
    for raw in manifest.read_text(encoding="utf-8").splitlines():
        rel = raw.strip()
        if not rel or rel.startswith("#"):
            continue
        if Path(rel).is_absolute() or ".." in Path(rel).parts:
            raise MalformedInputError(f"manifest path escapes the dataset: {rel!r}")
        path = rootp / rel
        if not path.is_file():
            raise MalformedInputError(f"manifest names a missing file: {rel!r}")
        try:
            features, label = parse_feature_file(path.read_text(encoding="utf-8"))
        except MalformedInputError as exc:
            raise MalformedInputError(f"{rel}: {exc}") from exc
        sample_id = rel[: -len(SAMPLE_SUFFIX)] if rel.endswith(SAMPLE_SUFFIX) else rel
        samples.append(DatasetSample(sample_id, features, label))
    return Dataset(samples)


def encode_dataset(
    dataset: Dataset, vocab: FeatureVocabulary
) -> tuple[np.ndarray, np.ndarray, int]:
    """Dense design matrix, labels, and the total out-of-vocabulary tally."""
    x = np.zeros((len(dataset), len(vocab)), dtype=np.float64)
    dropped_total = 0
    for row, sample in enumerate(dataset):
        vector, dropped = encode(sample.features, vocab)
        dropped_total += dropped
        if vector.active:
            x[row, list(vector.active)] = 1.0
    return x, dataset.labels(), dropped_total


def split_dataset(
    dataset: Dataset, fraction: float = 0.8, seed: int = 0
) -> tuple[list[str], list[str]]:
    """Stratified train/test id split, deterministic under the seed.

    Per class, round(fraction * n) samples go to train, clamped so both
    sides keep at least one sample of each class.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("split fraction must lie strictly between 0 and 1")
    by_label: dict[str, list[str]] = {label: [] for label in LABELS}
    for sample in dataset:
        by_label[sample.label].append(sample.sample_id)
    for label, ids in by_label.items():
        if len(ids) < 2:
            raise ValueError(
                f"class {label!r} has {len(ids)} samples; need at least 2 to split"
            )
    rng = np.random.default_rng(seed)
    train_ids: list[str] = []
    test_ids: list[str] = []
    for label in LABELS:  # fixed label order keeps the rng stream stable
        ids = by_label[label]
        order = rng.permutation(len(ids))
        n_train = int(round(len(ids) * fraction))
        n_train = min(max(n_train, 1), len(ids) - 1)
        train_ids.extend(ids[i] for i in order[:n_train])
        test_ids.extend(ids[i] for i in order[n_train:])
    return train_ids, test_ids
