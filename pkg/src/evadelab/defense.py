"""Adversarial training defense: sample, augment, retrain, compare.

The flow mirrors the attack's bookkeeping in reverse: successful attack
traces donate their final feature sets as malicious-labeled training
examples, the vocabulary is rebuilt so adversarially added features
become visible to the detector, and the detector is retrained with
unchanged hyperparameters.  Reports compare per-pairing attack success
rates before and after.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .attack import AttackTrace, attack_outcomes
from .dataset import Dataset, encode_dataset
from .detectors import DetectorModel, TrainingConfig, train
from .errors import EmptyPopulationError
from .features import FeatureSet, FeatureVocabulary, build_vocabulary, encode
from .projection import ProjectionSpec, project_many


@dataclass(frozen=True)
class AugmentationPlan:
    """How many adversarial examples to draw per manipulator-analyzer pairing."""

    per_pairing: int = 50
    seed: int = 0

    def __post_init__(self) -> None:
        if self.per_pairing < 1:
            raise ValueError("per-pairing sample count must be positive")


@dataclass(frozen=True)
class AdversarialExample:
    pairing: str
    sample_id: str
    features: FeatureSet  # the episode's final feature set; label is malicious


@dataclass(frozen=True)
class SamplingResult:
    examples: tuple[AdversarialExample, ...]
    shortfalls: dict[str, int]  # pairing -> how many short of the plan

    def feature_sets(self) -> list[FeatureSet]:
        return [e.features for e in self.examples]


def sample_adversarial(
    successes_by_pairing: Mapping[str, Sequence[AttackTrace]],
    plan: AugmentationPlan,
) -> SamplingResult:
    """Draw up to ``plan.per_pairing`` final feature sets from each pairing.

    Sampling is without replacement within a pairing and deterministic
    under the plan seed.  A pairing short of the plan contributes all its
    traces and records the shortfall rather than failing.
    """
    total = sum(len(traces) for traces in successes_by_pairing.values())
    if total == 0:
        raise EmptyPopulationError("no successful attack traces to sample from")
    rng = np.random.default_rng(plan.seed)
    examples: list[AdversarialExample] = []
    shortfalls: dict[str, int] = {}
    for pairing in sorted(successes_by_pairing):
        traces = sorted(successes_by_pairing[pairing], key=lambda t: t.sample_id)
        if len(traces) <= plan.per_pairing:
            chosen = traces
            if len(traces) < plan.per_pairing:
                shortfalls[pairing] = plan.per_pairing - len(traces)
        else:
            picks = rng.choice(len(traces), size=plan.per_pairing, replace=False)
            chosen = [traces[int(i)] for i in np.sort(picks)]
        for trace in chosen:
            final = (
                trace.final_features
                if trace.final_features is not None
                else trace.base_features
            )
            examples.append(AdversarialExample(pairing, trace.sample_id, final))
    return SamplingResult(tuple(examples), shortfalls)


def encode_with_projection(
    feature_sets: Sequence[FeatureSet],
    vocab: FeatureVocabulary,
    projection: ProjectionSpec | None,
) -> np.ndarray:
    vectors = [encode(fs, vocab)[0] for fs in feature_sets]
    if projection is None:
        x = np.zeros((len(vectors), len(vocab)), dtype=np.float64)
        for row, v in enumerate(vectors):
            if v.active:
                x[row, list(v.active)] = 1.0
        return x
    return project_many(vectors, projection)


def retrain_with_augmentation(
    base: Dataset,
    adversarial: Sequence[FeatureSet],
    kind: str,
    config: TrainingConfig,
    projection_dim: int | None = None,
) -> tuple[DetectorModel, FeatureVocabulary]:
    """Retrain ``kind`` on base plus malicious-labeled adversarial examples.

    The vocabulary is rebuilt over the augmented corpus, so features the
    attack introduced stop being out-of-vocabulary.  Hyperparameters and
    seed come unchanged from ``config``; with zero adversarial examples
    this reduces exactly to baseline training.
    """
    corpus = base.feature_sets() + list(adversarial)
    vocab = build_vocabulary(corpus)
    projection = (
        ProjectionSpec.create(
            seed=config.seed, input_dim=len(vocab), output_dim=projection_dim
        )
        if projection_dim is not None
        else None
    )
    x = encode_with_projection(corpus, vocab, projection)
    y = np.concatenate([base.labels(), np.ones(len(adversarial))])
    model = train(kind, x, y, config, projection=projection)
    return model, vocab


@dataclass(frozen=True)
class DefenseRow:
    detector: str
    pairing: str
    attacked: int
    asr_before: float
    asr_after: float

    @property
    def reduction(self) -> float:
        return self.asr_before - self.asr_after


@dataclass(frozen=True)
class DefenseReport:
    rows: tuple[DefenseRow, ...]

    def format_table(self) -> str:
        lines = ["detector,pairing,attacked,asr_before,asr_after,reduction"]
        for r in self.rows:
            lines.append(
                f"{r.detector},{r.pairing},{r.attacked},"
                f"{r.asr_before:.6f},{r.asr_after:.6f},{r.reduction:.6f}"
            )
        return "\n".join(lines) + "\n"


def _asr(
    traces: Sequence[AttackTrace], vocab: FeatureVocabulary, model: DetectorModel
) -> float:
    outcomes = attack_outcomes(traces, vocab, model)
    return sum(1 for success, _ in outcomes if success) / len(outcomes)


def evaluate_defense(
    detector: str,
    traces_by_pairing: Mapping[str, Sequence[AttackTrace]],
    before_model: DetectorModel,
    before_vocab: FeatureVocabulary,
    after_model: DetectorModel,
    after_vocab: FeatureVocabulary,
    after_traces_by_pairing: Mapping[str, Sequence[AttackTrace]] | None = None,
) -> DefenseReport:
    """Per-pairing ASR before vs after retraining, on one population.

    Default is replay mode: the recorded final feature sets are simply
    re-judged by the retrained detector.  Passing fresh traces switches
    to re-attack mode; they must cover exactly the same sample ids.
    """
    if not traces_by_pairing:
        raise ValueError("no attack traces to evaluate")
    if after_traces_by_pairing is not None:
        if set(after_traces_by_pairing) != set(traces_by_pairing):
            raise ValueError("re-attack pairings do not match the original campaign")
        for pairing, traces in traces_by_pairing.items():
            before_ids = sorted(t.sample_id for t in traces)
            after_ids = sorted(t.sample_id for t in after_traces_by_pairing[pairing])
            if before_ids != after_ids:
                raise ValueError(
                    f"re-attack population mismatch in pairing {pairing!r}"
                )
    rows = []
    for pairing in sorted(traces_by_pairing):
        traces = list(traces_by_pairing[pairing])
        if not traces:
            raise ValueError(f"pairing {pairing!r} has no traces")
        after_traces = (
            list(after_traces_by_pairing[pairing])
            if after_traces_by_pairing is not None
            else traces
        )
        rows.append(
            DefenseRow(
                detector=detector,
                pairing=pairing,
                attacked=len(traces),
                asr_before=_asr(traces, before_vocab, before_model),
                asr_after=_asr(after_traces, after_vocab, after_model),
            )
        )
    return DefenseReport(tuple(rows))
