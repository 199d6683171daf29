"""Very sparse random projection of binary feature vectors.

Each input coordinate ``i`` owns a ternary row R_i whose entries are drawn
from {+1, 0, -1} with probabilities (s/2, 1-s, s/2).  Rows are a pure
function of (seed, i): row ``i`` is generated from a Philox counter-based
stream keyed by the seed with the counter set to ``i``, so any subset of
rows can be reproduced independently of generation order or platform.

The projected image of a binary vector is (1/sqrt(s*d)) * sum of its active
rows.  ProjectedVector keeps the integer row sums and applies the scale
only when a dense view is taken, which makes addition of projections over
disjoint active sets exact rather than merely close.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .features import BinaryFeatureVector

_ROW_CACHE: dict[tuple[int, int, float, int], np.ndarray] = {}
_ROW_CACHE_MAX = 200_000


def default_density(input_dim: int) -> float:
    """The very-sparse default: one expected nonzero per sqrt(D) entries."""
    return 1.0 / math.sqrt(input_dim)


@dataclass(frozen=True)
class ProjectionSpec:
    """Deterministic description of a projection; equal specs project identically."""

    seed: int
    input_dim: int
    output_dim: int
    density: float

    def __post_init__(self):
        if not 0 < self.output_dim < self.input_dim:
            raise ValueError("require 0 < output_dim < input_dim")
        if not 0 < self.density <= 1:
            raise ValueError("require 0 < density <= 1")

    @classmethod
    def create(
        cls, seed: int, input_dim: int, output_dim: int, density: float | None = None
    ) -> "ProjectionSpec":
        if density is None:
            density = default_density(input_dim)
        return cls(seed=seed, input_dim=input_dim, output_dim=output_dim, density=density)

    @property
    def scale(self) -> float:
        return 1.0 / math.sqrt(self.density * self.output_dim)


def _ternary_row(spec: ProjectionSpec, i: int) -> np.ndarray:
    """Row i of the projection matrix as an int8 array in {-1, 0, +1}."""
    key = (spec.seed, spec.output_dim, spec.density, i)
    row = _ROW_CACHE.get(key)
    if row is None:
        bitgen = np.random.Philox(
            key=np.uint64(spec.seed), counter=np.array([0, 0, 0, i], dtype=np.uint64)
        )
        u = np.random.Generator(bitgen).random(spec.output_dim)
        row = np.zeros(spec.output_dim, dtype=np.int8)
        row[u < spec.density / 2.0] = 1
        row[(u >= spec.density / 2.0) & (u < spec.density)] = -1
        row.flags.writeable = False
        if len(_ROW_CACHE) >= _ROW_CACHE_MAX:
            _ROW_CACHE.clear()
        _ROW_CACHE[key] = row
    return row


class ProjectedVector:
    """Dense projection image holding exact integer row sums plus the scale.

    Addition of two images over disjoint active-index sets is exact integer
    addition, so project(a | b) == project(a) + project(b) bit for bit.
    """

    __slots__ = ("spec", "counts")

    def __init__(self, spec: ProjectionSpec, counts: np.ndarray):
        if counts.shape != (spec.output_dim,):
            raise ValueError("counts shape must match output dimension")
        self.spec = spec
        self.counts = counts.astype(np.int64, copy=False)
        self.counts.flags.writeable = False

    def to_dense(self) -> np.ndarray:
        return self.counts.astype(np.float64) * self.spec.scale

    def __add__(self, other: "ProjectedVector") -> "ProjectedVector":
        if not isinstance(other, ProjectedVector):
            return NotImplemented
        if other.spec != self.spec:
            raise ValueError("cannot add projections from different specs")
        return ProjectedVector(self.spec, self.counts + other.counts)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProjectedVector):
            return NotImplemented
        return self.spec == other.spec and bool(np.array_equal(self.counts, other.counts))

    def __len__(self) -> int:
        return self.spec.output_dim


def project(v: BinaryFeatureVector, spec: ProjectionSpec) -> ProjectedVector:
    if v.dimension != spec.input_dim:
        raise ValueError(
            f"vector dimension {v.dimension} does not match projection input {spec.input_dim}"
        )
    counts = np.zeros(spec.output_dim, dtype=np.int64)
    for i in v.active:
        counts += _ternary_row(spec, i)
    return ProjectedVector(spec, counts)


def project_dense(v: BinaryFeatureVector, spec: ProjectionSpec) -> np.ndarray:
    return project(v, spec).to_dense()


def project_many(vectors: list[BinaryFeatureVector], spec: ProjectionSpec) -> np.ndarray:
    """Project a batch into a (n, d) float matrix, sharing row generation."""
    out = np.zeros((len(vectors), spec.output_dim), dtype=np.float64)
    for r, v in enumerate(vectors):
        out[r] = project(v, spec).to_dense()
    return out
