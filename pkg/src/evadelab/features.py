"""Drebin-style feature model: features, sets, vocabulary encoding, grouping.

Everything here is immutable after construction and every operation is a
pure function, so the types are safe to share across attack episodes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .errors import MalformedInputError


class Category(enum.Enum):
    """The eight static feature categories.

    ``token`` is the grammar token used in feature files and prompts;
    ``title`` is the human-readable group name used by class grouping.
    """

    HARDWARE = ("hardware", "hardware components")
    PERMISSION = ("permission", "requested permissions")
    COMPONENT = ("component", "application components")
    INTENT = ("intent", "filtered intents")
    RESTRICTED_API = ("restricted_api", "restricted API calls")
    USED_PERMISSION = ("used_permission", "used permissions")
    API_CALL = ("api_call", "suspicious API calls")
    URL = ("url", "network addresses")

    def __init__(self, token: str, title: str):
        self.token = token
        self.title = title

    @classmethod
    def from_token(cls, token: str) -> "Category":
        for cat in cls:
            if cat.token == token:
                return cat
        raise KeyError(token)


_CATEGORY_TOKENS = {c.token for c in Category}
CATEGORY_TOKENS = frozenset(_CATEGORY_TOKENS)


@dataclass(frozen=True, order=True)
class DrebinFeature:
    """A single (category, value) static feature."""

    category: Category
    value: str

    def __post_init__(self):
        if not isinstance(self.category, Category):
            raise ValueError(f"unknown category: {self.category!r}")
        if not self.value:
            raise ValueError("feature value must be non-empty")
        if "\n" in self.value or "\r" in self.value:
            raise ValueError("feature value must not contain line breaks")

    def serialize(self) -> str:
        return f"{self.category.token}::{self.value}"

    @classmethod
    def parse(cls, line: str) -> "DrebinFeature":
        token, sep, value = line.partition("::")
        if not sep:
            raise ValueError(f"not a feature line: {line!r}")
        if token not in _CATEGORY_TOKENS:
            raise ValueError(f"unknown category token: {token!r}")
        return cls(Category.from_token(token), value.strip())

    def __str__(self) -> str:
        return self.serialize()


class FeatureSet:
    """Duplicate-free, insertion-ordered collection of features.

    Algebra (union, difference) is set algebra; iteration order is the
    order of first insertion, preserved by union and difference.
    Instances are immutable; all operations return new sets.
    """

    __slots__ = ("_items", "_index")

    def __init__(self, features: Iterable[DrebinFeature] = ()):
        items: list[DrebinFeature] = []
        seen: set[DrebinFeature] = set()
        for f in features:
            if not isinstance(f, DrebinFeature):
                raise TypeError(f"expected DrebinFeature, got {type(f).__name__}")
            if f not in seen:
                seen.add(f)
                items.append(f)
        object.__setattr__(self, "_items", tuple(items))
        object.__setattr__(self, "_index", frozenset(seen))

    def __setattr__(self, name, value):
        raise AttributeError("FeatureSet is immutable")

    def __iter__(self) -> Iterator[DrebinFeature]:
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __contains__(self, f: DrebinFeature) -> bool:
        return f in self._index

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureSet):
            return NotImplemented
        return self._index == other._index

    def __hash__(self) -> int:
        return hash(self._index)

    def __repr__(self) -> str:
        return f"FeatureSet({len(self)} features)"

    def add(self, f: DrebinFeature) -> "FeatureSet":
        """Return a set with ``f`` appended; no-op if already present."""
        if f in self:
            return self
        return FeatureSet(self._items + (f,))

    def union(self, other: Iterable[DrebinFeature]) -> "FeatureSet":
        return FeatureSet(list(self._items) + list(other))

    def difference(self, other: Iterable[DrebinFeature]) -> "FeatureSet":
        drop = set(other)
        return FeatureSet(f for f in self._items if f not in drop)

    def issubset(self, other: "FeatureSet") -> bool:
        return self._index <= other._index

    def as_frozenset(self) -> frozenset[DrebinFeature]:
        return self._index

    def serialize_lines(self) -> list[str]:
        return [f.serialize() for f in self._items]


class FeatureVocabulary:
    """Frozen bijective mapping feature -> column index in [0, D).

    Index order is lexicographic by (category token, value) so that two
    machines building from the same corpus produce the same model inputs.
    """

    __slots__ = ("_to_index", "_features")

    def __init__(self, features_in_order: Iterable[DrebinFeature]):
        feats = tuple(features_in_order)
        mapping = {f: i for i, f in enumerate(feats)}
        if len(mapping) != len(feats):
            raise ValueError("vocabulary features must be distinct")
        object.__setattr__(self, "_features", feats)
        object.__setattr__(self, "_to_index", mapping)

    def __setattr__(self, name, value):
        raise AttributeError("FeatureVocabulary is immutable")

    @property
    def size(self) -> int:
        return len(self._features)

    def __len__(self) -> int:
        return len(self._features)

    def __contains__(self, f: DrebinFeature) -> bool:
        return f in self._to_index

    def index_of(self, f: DrebinFeature) -> int:
        return self._to_index[f]

    def feature_at(self, index: int) -> DrebinFeature:
        return self._features[index]

    def __iter__(self) -> Iterator[DrebinFeature]:
        return iter(self._features)

    def serialize_lines(self) -> list[str]:
        return [f.serialize() for f in self._features]

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "FeatureVocabulary":
        return cls(DrebinFeature.parse(ln) for ln in lines if ln.strip())


@dataclass(frozen=True)
class BinaryFeatureVector:
    """Sparse one-hot encoding: strictly increasing active indices in [0, D)."""

    dimension: int
    active: tuple[int, ...]

    def __post_init__(self):
        prev = -1
        for i in self.active:
            if i <= prev:
                raise ValueError("active indices must be strictly increasing")
            if not 0 <= i < self.dimension:
                raise ValueError(f"index {i} out of range [0, {self.dimension})")
            prev = i

    def to_dense(self) -> np.ndarray:
        v = np.zeros(self.dimension, dtype=np.float64)
        if self.active:
            v[list(self.active)] = 1.0
        return v

    def __len__(self) -> int:
        return len(self.active)


LABELS = ("benign", "malicious")


def parse_feature_file(text: str) -> tuple[FeatureSet, str]:
    """Parse one feature-file document into (FeatureSet, label).

    Grammar: first contentful line is ``label: benign|malicious``; each
    following non-empty line is ``<category>::<value>``; ``#`` lines are
    comments.  First-occurrence order is preserved; duplicates collapse.
    """
    label: str | None = None
    features: list[DrebinFeature] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if label is None:
            head, sep, rest = line.partition(":")
            if not sep or head.strip() != "label":
                raise MalformedInputError("expected 'label: benign|malicious' header", lineno)
            label = rest.strip()
            if label not in LABELS:
                raise MalformedInputError(f"unknown label {label!r}", lineno)
            continue
        try:
            features.append(DrebinFeature.parse(line))
        except ValueError as exc:
            raise MalformedInputError(str(exc), lineno) from exc
    if label is None:
        raise MalformedInputError("missing 'label:' header")
    return FeatureSet(features), label


def serialize_feature_file(features: FeatureSet, label: str) -> str:
    if label not in LABELS:
        raise ValueError(f"unknown label {label!r}")
    lines = [f"label: {label}"] + features.serialize_lines()
    return "\n".join(lines) + "\n"


def build_vocabulary(corpus: Iterable[FeatureSet]) -> FeatureVocabulary:
    """Collect every distinct feature in the corpus, ordered lexicographically."""
    distinct: set[DrebinFeature] = set()
    count = 0
    for fs in corpus:
        count += 1
        distinct.update(fs)
    if count == 0:
        raise ValueError("corpus must contain at least one feature set")
    ordered = sorted(distinct, key=lambda f: (f.category.token, f.value))
    return FeatureVocabulary(ordered)


def encode(features: FeatureSet, vocab: FeatureVocabulary) -> tuple[BinaryFeatureVector, int]:
    """Encode a set against a vocabulary.

    Out-of-vocabulary features are not an error: a deployed detector simply
    ignores features it never saw in training.  They are dropped and counted
    in the returned tally so attack traces can log them.
    """
    indices = []
    dropped = 0
    for f in features:
        if f in vocab:
            indices.append(vocab.index_of(f))
        else:
            dropped += 1
    indices.sort()
    return BinaryFeatureVector(vocab.size, tuple(indices)), dropped


def class_key(feature: DrebinFeature) -> str:
    """Grouping key: API calls group under their defining class, everything
    else under its category title.  Values without a dotted path fall back
    to the category."""
    if feature.category is Category.API_CALL:
        path = feature.value.split("(", 1)[0]
        if "." in path:
            return path.rsplit(".", 1)[0]
    return feature.category.title


def group_by_class(features: FeatureSet) -> list[tuple[str, FeatureSet]]:
    """Partition a set into (group key, members) in first-occurrence order."""
    groups: dict[str, list[DrebinFeature]] = {}
    for f in features:
        groups.setdefault(class_key(f), []).append(f)
    return [(key, FeatureSet(members)) for key, members in groups.items()]
