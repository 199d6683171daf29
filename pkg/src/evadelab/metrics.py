"""Figures of merit: confusion-derived rates and attack statistics.

Everything here is a pure function of its arguments, safe for concurrent
use.  The malicious class (label 1) is the positive class throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import UndefinedMetricError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self) -> None:
        for name in ("tp", "fp", "tn", "fn"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {value!r}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class Rates:
    tpr: float
    fpr: float
    accuracy: float
    f1: float


def confusion(predictions: Sequence[int], labels: Sequence[int]) -> ConfusionCounts:
    pred = np.asarray(predictions)
    true = np.asarray(labels)
    if pred.shape != true.shape or pred.ndim != 1:
        raise ValueError(
            f"predictions and labels must be equal-length 1-D sequences, "
            f"got {pred.shape} and {true.shape}"
        )
    if pred.shape[0] == 0:
        raise ValueError("cannot build a confusion matrix from zero samples")
    for name, arr in (("predictions", pred), ("labels", true)):
        bad = set(np.unique(arr).tolist()) - {0, 1}
        if bad:
            raise ValueError(f"{name} must be 0 or 1, found {sorted(bad)}")
    return ConfusionCounts(
        tp=int(np.sum((pred == 1) & (true == 1))),
        fp=int(np.sum((pred == 1) & (true == 0))),
        tn=int(np.sum((pred == 0) & (true == 0))),
        fn=int(np.sum((pred == 0) & (true == 1))),
    )


def rates(c: ConfusionCounts) -> Rates:
    if c.tp + c.fn == 0:
        raise UndefinedMetricError("no positive samples: tpr is undefined")
    if c.fp + c.tn == 0:
        raise UndefinedMetricError("no negative samples: fpr is undefined")
    tpr = c.tp / (c.tp + c.fn)
    fpr = c.fp / (c.fp + c.tn)
    accuracy = (c.tp + c.tn) / c.total
    if c.tp == 0:
        f1 = 0.0
    else:
        precision = c.tp / (c.tp + c.fp)
        f1 = 2.0 * precision * tpr / (precision + tpr)
    return Rates(tpr=tpr, fpr=fpr, accuracy=accuracy, f1=f1)


@dataclass(frozen=True)
class AttackSummary:
    attacked: int
    evaded: int
    failed: int
    success_attempts: tuple[int, ...]
    max_attempts: int

    def __post_init__(self) -> None:
        if self.attacked < 1:
            raise UndefinedMetricError("attack summary over zero episodes")
        if self.evaded + self.failed != self.attacked:
            raise ValueError(
                f"evaded ({self.evaded}) + failed ({self.failed}) "
                f"must equal attacked ({self.attacked})"
            )
        if len(self.success_attempts) != self.evaded:
            raise ValueError("one attempt count required per evaded episode")
        for count in self.success_attempts:
            if not 1 <= count <= self.max_attempts:
                raise ValueError(
                    f"attempt count {count} outside [1, {self.max_attempts}]"
                )

    @property
    def asr(self) -> float:
        return self.evaded / self.attacked

    @property
    def mean_attempts(self) -> float:
        """Mean attempts per evasion; episodes that hit the cap are excluded."""
        if self.evaded == 0:
            raise UndefinedMetricError("no successful episodes: mean attempts undefined")
        return sum(self.success_attempts) / self.evaded

    def histogram(self) -> list[tuple[int, int]]:
        buckets = {b: 0 for b in range(1, self.max_attempts + 1)}
        for count in self.success_attempts:
            buckets[count] += 1
        return sorted(buckets.items())


def attack_summary(
    outcomes: Iterable[tuple[bool, int]], max_attempts: int
) -> AttackSummary:
    """Aggregate (evaded, attempts_used) pairs, one per attacked sample."""
    evaded = 0
    failed = 0
    success_attempts: list[int] = []
    for success, attempts in outcomes:
        if success:
            evaded += 1
            success_attempts.append(attempts)
        else:
            failed += 1
    return AttackSummary(
        attacked=evaded + failed,
        evaded=evaded,
        failed=failed,
        success_attempts=tuple(success_attempts),
        max_attempts=max_attempts,
    )


def format_key_value_report(items: dict[str, object]) -> str:
    lines = [f"{key}={value}" for key, value in items.items()]
    return "\n".join(lines) + "\n"


def format_histogram_table(summary: AttackSummary) -> str:
    lines = ["attempts,count"]
    lines += [f"{attempts},{count}" for attempts, count in summary.histogram()]
    return "\n".join(lines) + "\n"
