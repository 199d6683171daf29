"""The feature-addition attack loop.

One episode drives a manipulator agent and an analyzer agent against a
malicious sample's feature set: retrieve documentation context, ask the
manipulator for a modified set, validate the proposal against the
addition-only ledger, then ask the analyzer for a verdict.  A benign
verdict ends the episode; a malicious one feeds its explanation back into
a guided revision, up to the attempt cap.

The ledger rules are strict: a valid proposal either adds exactly one new
feature or swaps the most recently added one for a different new feature.
Original features can never disappear.  Anything else is invalid and gets
one free re-prompt before the attempt is forfeited with state unchanged.

Attack success for reporting purposes is decided by the ML detector on
the final feature set (`finalize`), not by the analyzer, whose verdict
only stops the loop.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable

from .agents import (
    AnalyzerVerdict,
    PromptKind,
    build_prompt,
    parse_analyzer_output,
    parse_manipulator_output,
)
from .backends import Backend
from .detectors import DetectorModel, predict
from .errors import BackendUnavailableError, UnparseableResponseError
from .features import DrebinFeature, FeatureSet, FeatureVocabulary, encode
from .projection import project
from .rag import ChunkIndex, retrieve_for_features

EXPLANATION_GROUP_KEY = "analyzer explanation"

OUTCOME_EVADED = "evaded"
OUTCOME_CAPPED = "capped"
OUTCOME_ABORTED = "aborted"

REASON_NO_CHANGE = "no_change"
REASON_MISSING_ORIGINAL = "missing_original"
REASON_MULTIPLE_ADDITIONS = "multiple_additions"
REASON_REMOVED_NON_LAST = "removed_non_last"
REASON_REMOVED_WITHOUT_REPLACEMENT = "removed_without_replacement"
REASON_UNPARSEABLE = "unparseable"


@dataclass(frozen=True)
class AttackConfig:
    max_attempts: int = 10
    retrieval_k: int = 5
    context_budget: int = 12000

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("attempt cap must be at least 1")
        if self.retrieval_k < 1:
            raise ValueError("retrieval k must be at least 1")


@dataclass(frozen=True)
class AttackState:
    """Loop state: the sample, the perturbation so far, and the feedback."""

    original: FeatureSet
    perturbation: FeatureSet
    last_added: DrebinFeature | None
    explanation: str | None
    attempt: int

    def __post_init__(self) -> None:
        overlap = [f for f in self.perturbation if f in self.original]
        if overlap:
            raise ValueError(
                f"perturbation overlaps the original set: {overlap[0].serialize()}"
            )
        if self.last_added is not None and self.last_added not in self.perturbation:
            raise ValueError("last added feature must be part of the perturbation")
        if self.attempt < 1:
            raise ValueError("attempt counter starts at 1")

    @classmethod
    def initial(cls, original: FeatureSet) -> "AttackState":
        return cls(original, FeatureSet(()), None, None, 1)

    @property
    def current(self) -> FeatureSet:
        return self.original.union(self.perturbation)

    def apply_delta(self, delta: "Delta") -> "AttackState":
        if not delta.is_valid:
            raise ValueError("cannot apply an invalid delta")
        if delta.kind == "add":
            perturbation = self.perturbation.union(FeatureSet([delta.added]))
        else:
            perturbation = self.perturbation.difference(
                FeatureSet([delta.removed])
            ).union(FeatureSet([delta.added]))
        return AttackState(
            self.original, perturbation, delta.added, self.explanation, self.attempt
        )

    def with_explanation(self, explanation: str) -> "AttackState":
        return AttackState(
            self.original, self.perturbation, self.last_added, explanation,
            self.attempt,
        )

    def next_attempt(self) -> "AttackState":
        return AttackState(
            self.original, self.perturbation, self.last_added, self.explanation,
            self.attempt + 1,
        )


@dataclass(frozen=True)
class Delta:
    """Validated classification of one manipulator proposal."""

    kind: str  # "add" | "replace" | "invalid"
    added: DrebinFeature | None = None
    removed: DrebinFeature | None = None
    reason: str | None = None

    @classmethod
    def add(cls, feature: DrebinFeature) -> "Delta":
        return cls("add", added=feature)

    @classmethod
    def replace(cls, old: DrebinFeature, new: DrebinFeature) -> "Delta":
        return cls("replace", added=new, removed=old)

    @classmethod
    def invalid(cls, reason: str) -> "Delta":
        return cls("invalid", reason=reason)

    @property
    def is_valid(self) -> bool:
        return self.kind != "invalid"


def classify_delta(
    original: FeatureSet,
    perturbation: FeatureSet,
    last_added: DrebinFeature | None,
    proposed: FeatureSet,
) -> Delta:
    """Judge a proposed feature set against the addition-only ledger.

    Valid outcomes: add(g) when proposed = original ∪ perturbation ∪ {g},
    or replace(last→g) when proposed swaps exactly the last added feature
    for a new one.  Everything else is invalid with a reason; invalid is a
    value, not an error.
    """
    base = original.union(perturbation)
    if not original.issubset(proposed):
        return Delta.invalid(REASON_MISSING_ORIGINAL)
    if proposed == base:
        return Delta.invalid(REASON_NO_CHANGE)
    added = [f for f in proposed if f not in base]
    removed = [f for f in base if f not in proposed]
    if len(added) > 1:
        return Delta.invalid(REASON_MULTIPLE_ADDITIONS)
    if not added:
        # strictly shrinking proposal; x ⊆ proposed so only ρ elements left
        return Delta.invalid(REASON_REMOVED_WITHOUT_REPLACEMENT)
    new_feature = added[0]
    if not removed:
        return Delta.add(new_feature)
    if len(removed) == 1 and last_added is not None and removed[0] == last_added:
        return Delta.replace(last_added, new_feature)
    return Delta.invalid(REASON_REMOVED_NON_LAST)


@dataclass
class AttemptRecord:
    attempt: int
    kind: str  # "propose" | "revise"
    manipulator_prompt_sha256: str
    manipulator_calls: int
    delta: Delta
    rho_after: tuple[str, ...]
    analyzer_prompt_sha256: str | None = None
    analyzer_calls: int = 0
    verdict: str | None = None
    explanation_sha256: str | None = None
    aborted_stage: str | None = None  # "manipulator" | "analyzer" when aborted


@dataclass
class AttackTrace:
    sample_id: str
    base_features: FeatureSet
    records: list[AttemptRecord] = field(default_factory=list)
    outcome: str = OUTCOME_CAPPED
    final_features: FeatureSet | None = None

    @property
    def attempts_used(self) -> int:
        return len(self.records)

    @property
    def evaded(self) -> bool:
        return self.outcome == OUTCOME_EVADED

    def perturbation(self) -> FeatureSet:
        final = self.final_features if self.final_features is not None else self.base_features
        return final.difference(self.base_features)


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _delta_to_dict(delta: Delta) -> dict:
    return {
        "kind": delta.kind,
        "added": delta.added.serialize() if delta.added else None,
        "removed": delta.removed.serialize() if delta.removed else None,
        "reason": delta.reason,
    }


def _delta_from_dict(data: dict) -> Delta:
    return Delta(
        kind=data["kind"],
        added=DrebinFeature.parse(data["added"]) if data["added"] else None,
        removed=DrebinFeature.parse(data["removed"]) if data["removed"] else None,
        reason=data["reason"],
    )


def serialize_trace(trace: AttackTrace) -> str:
    """Line-delimited JSON: one record per attempt, then a summary line."""
    lines = []
    for r in trace.records:
        lines.append(
            json.dumps(
                {
                    "type": "attempt",
                    "attempt": r.attempt,
                    "kind": r.kind,
                    "manipulator_prompt_sha256": r.manipulator_prompt_sha256,
                    "manipulator_calls": r.manipulator_calls,
                    "delta": _delta_to_dict(r.delta),
                    "rho_after": list(r.rho_after),
                    "analyzer_prompt_sha256": r.analyzer_prompt_sha256,
                    "analyzer_calls": r.analyzer_calls,
                    "verdict": r.verdict,
                    "explanation_sha256": r.explanation_sha256,
                    "aborted_stage": r.aborted_stage,
                },
                sort_keys=True,
                separators=(",", ":"),
            )
        )
    final = trace.final_features if trace.final_features is not None else trace.base_features
    lines.append(
        json.dumps(
            {
                "type": "episode",
                "sample_id": trace.sample_id,
                "outcome": trace.outcome,
                "attempts": trace.attempts_used,
                "base_features": [f.serialize() for f in trace.base_features],
                "final_features": [f.serialize() for f in final],
            },
            sort_keys=True,
            separators=(",", ":"),
        )
    )
    return "\n".join(lines) + "\n"


def parse_trace(text: str) -> AttackTrace:
    records: list[AttemptRecord] = []
    summary: dict | None = None
    for line in text.splitlines():
        if not line.strip():
            continue
        data = json.loads(line)
        if data["type"] == "attempt":
            records.append(
                AttemptRecord(
                    attempt=data["attempt"],
                    kind=data["kind"],
                    manipulator_prompt_sha256=data["manipulator_prompt_sha256"],
                    manipulator_calls=data["manipulator_calls"],
                    delta=_delta_from_dict(data["delta"]),
                    rho_after=tuple(data["rho_after"]),
                    analyzer_prompt_sha256=data["analyzer_prompt_sha256"],
                    analyzer_calls=data["analyzer_calls"],
                    verdict=data["verdict"],
                    explanation_sha256=data["explanation_sha256"],
                    aborted_stage=data["aborted_stage"],
                )
            )
        elif data["type"] == "episode":
            summary = data
    if summary is None:
        raise ValueError("trace has no episode summary line")
    trace = AttackTrace(
        sample_id=summary["sample_id"],
        base_features=FeatureSet(
            DrebinFeature.parse(s) for s in summary["base_features"]
        ),
        records=records,
        outcome=summary["outcome"],
        final_features=FeatureSet(
            DrebinFeature.parse(s) for s in summary["final_features"]
        ),
    )
    return trace


def run_attack(
    sample_id: str,
    features: FeatureSet,
    *,
    manipulator: Backend,
    analyzer: Backend,
    index: ChunkIndex,
    config: AttackConfig = AttackConfig(),
) -> AttackTrace:
    trace = AttackTrace(sample_id=sample_id, base_features=features)
    state = AttackState.initial(features)

    while state.attempt <= config.max_attempts:
        kind = PromptKind.PROPOSE if state.explanation is None else PromptKind.REVISE
        extra = (
            [(EXPLANATION_GROUP_KEY, state.explanation)]
            if state.explanation is not None
            else []
        )
        context = retrieve_for_features(
            index, state.current, k=config.retrieval_k,
            budget=config.context_budget, extra_groups=extra,
        )
        prompt = build_prompt(
            kind, context, state.current,
            explanation=state.explanation, last_added=state.last_added,
        )
        record = AttemptRecord(
            attempt=state.attempt,
            kind=kind.value,
            manipulator_prompt_sha256=_digest(prompt),
            manipulator_calls=0,
            delta=Delta.invalid(REASON_UNPARSEABLE),
            rho_after=tuple(f.serialize() for f in state.perturbation),
        )
        trace.records.append(record)

        # manipulator phase: one free re-prompt on a bad proposal
        delta = Delta.invalid(REASON_UNPARSEABLE)
        for _call in range(2):
            record.manipulator_calls += 1
            try:
                response = manipulator.invoke(prompt)
            except BackendUnavailableError:
                record.aborted_stage = "manipulator"
                trace.outcome = OUTCOME_ABORTED
                trace.final_features = state.current
                return trace
            try:
                proposal = parse_manipulator_output(response, features)
            except UnparseableResponseError:
                delta = Delta.invalid(REASON_UNPARSEABLE)
                continue
            delta = classify_delta(
                features, state.perturbation, state.last_added, proposal.features
            )
            if delta.is_valid:
                break
        record.delta = delta
        if not delta.is_valid:
            # attempt forfeited, state unchanged
            state = state.next_attempt()
            continue

        state = state.apply_delta(delta)
        adversarial = state.current
        record.rho_after = tuple(f.serialize() for f in state.perturbation)

        analyzer_context = retrieve_for_features(
            index, adversarial, k=config.retrieval_k, budget=config.context_budget
        )
        analyzer_prompt = build_prompt(PromptKind.ANALYZE, analyzer_context, adversarial)
        record.analyzer_prompt_sha256 = _digest(analyzer_prompt)

        verdict: AnalyzerVerdict | None = None
        raw_response = ""
        for _call in range(2):
            record.analyzer_calls += 1
            try:
                raw_response = analyzer.invoke(analyzer_prompt)
            except BackendUnavailableError:
                record.aborted_stage = "analyzer"
                trace.outcome = OUTCOME_ABORTED
                trace.final_features = adversarial
                return trace
            try:
                verdict = parse_analyzer_output(raw_response)
                break
            except UnparseableResponseError:
                verdict = None
        if verdict is None:
            # conservative: an unreadable analyzer is treated as a detection
            verdict = AnalyzerVerdict(
                label="Malicious",
                explanation=raw_response.strip() or "unreadable analyzer response",
            )
        record.verdict = verdict.label
        record.explanation_sha256 = _digest(verdict.explanation)

        if verdict.is_benign:
            trace.outcome = OUTCOME_EVADED
            trace.final_features = adversarial
            return trace
        state = state.with_explanation(verdict.explanation).next_attempt()

    trace.outcome = OUTCOME_CAPPED
    trace.final_features = state.current
    return trace


def finalize(
    trace: AttackTrace, vocab: FeatureVocabulary, model: DetectorModel
) -> bool:
    """Did the final feature set actually fool the ML detector?

    Encodes the episode's final features (added features outside the
    vocabulary simply drop out) and runs the detector; returns True when
    the detector now says benign.  This is the success notion used for
    attack-rate reporting; the analyzer verdict only stopped the loop.
    """
    final = trace.final_features if trace.final_features is not None else trace.base_features
    vector, _dropped = encode(final, vocab)
    if model.projection is not None:
        if model.projection.input_dim != len(vocab):
            raise ValueError(
                f"projection expects {model.projection.input_dim} inputs, "
                f"vocabulary has {len(vocab)}"
            )
        dense = project(vector, model.projection).to_dense()
    else:
        if model.input_dim != len(vocab):
            raise ValueError(
                f"detector expects {model.input_dim} inputs, vocabulary has {len(vocab)}"
            )
        dense = vector.to_dense()
    label, _score = predict(model, dense)
    return label == 0


def attack_outcomes(
    traces: Iterable[AttackTrace],
    vocab: FeatureVocabulary,
    model: DetectorModel,
) -> list[tuple[bool, int]]:
    """(success, attempts) pairs for metrics: success means the detector
    was fooled; capped and aborted episodes count as failures."""
    outcomes = []
    for trace in traces:
        success = trace.evaded and finalize(trace, vocab, model)
        outcomes.append((success, max(1, trace.attempts_used)))
    return outcomes
