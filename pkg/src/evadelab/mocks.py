"""Deterministic transports: scripted scenarios and detector-aware mocks.

The scripted transport replays a scenario file so every protocol path is
testable offline and byte-reproducible.  The greedy/margin pair simulates
a competent manipulator and an analyzer that mirrors a linear detector,
which makes end-to-end campaign outcomes predictable by arithmetic.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .agents import PromptKind, infer_prompt_kind
from .backends import TransientBackendError
from .errors import BackendUnavailableError, EvadeLabError
from .features import DrebinFeature, FeatureSet

MANIPULATOR_KINDS = {PromptKind.PROPOSE, PromptKind.REVISE}

VALID_EXPECTS = {"propose", "analyze", "revise", None}


class ScenarioMismatchError(EvadeLabError):
    """The incoming prompt does not match the scenario script."""


@dataclass(frozen=True)
class ScenarioRecord:
    response: str = ""
    expect: str | None = None  # "propose" | "analyze" | "revise" | None = any
    fail: str | None = None  # "transient" | "fatal" | None

    def __post_init__(self) -> None:
        if self.expect not in VALID_EXPECTS:
            raise ValueError(f"unknown expected kind {self.expect!r}")
        if self.fail not in (None, "transient", "fatal"):
            raise ValueError(f"unknown failure mode {self.fail!r}")


class ScriptedScenario:
    """An ordered script of responses shared by both agent roles.

    The shared cursor asserts the global call order, so a protocol-order
    bug (say, analyzing before proposing) fails loudly instead of
    silently consuming the wrong record.
    """

    def __init__(self, records: Iterable[ScenarioRecord]):
        self.records = list(records)
        self._cursor = 0
        self._lock = threading.Lock()

    @classmethod
    def from_responses(cls, responses: Sequence[str]) -> "ScriptedScenario":
        return cls(ScenarioRecord(response=r) for r in responses)

    @classmethod
    def from_jsonl(cls, text: str) -> "ScriptedScenario":
        records = []
        for line_number, line in enumerate(text.splitlines(), start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"scenario line {line_number}: {exc}") from exc
            records.append(
                ScenarioRecord(
                    response=data.get("response", ""),
                    expect=data.get("expect"),
                    fail=data.get("fail"),
                )
            )
        if not records:
            raise ValueError("scenario script is empty")
        return cls(records)

    @classmethod
    def load(cls, path: str | Path) -> "ScriptedScenario":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))

    @property
    def exhausted(self) -> bool:
        with self._lock:
            return self._cursor >= len(self.records)

    def next_record(self, kind: PromptKind) -> ScenarioRecord:
        with self._lock:
            if self._cursor >= len(self.records):
                raise ScenarioMismatchError(
                    f"scenario exhausted after {len(self.records)} records, "
                    f"but a {kind.value} prompt arrived"
                )
            record = self.records[self._cursor]
            if record.expect is not None and record.expect != kind.value:
                raise ScenarioMismatchError(
                    f"scenario record {self._cursor} expects {record.expect}, "
                    f"got {kind.value}"
                )
            self._cursor += 1
            return record


class ScriptedTransport:
    """Serves one agent role from a shared scenario."""

    def __init__(self, scenario: ScriptedScenario, role: str):
        if role not in ("manipulator", "analyzer"):
            raise ValueError(f"unknown role {role!r}")
        self.scenario = scenario
        self.role = role

    def complete(self, prompt: str) -> str:
        kind = infer_prompt_kind(prompt)
        expected_role = "analyzer" if kind is PromptKind.ANALYZE else "manipulator"
        if expected_role != self.role:
            raise ScenarioMismatchError(
                f"{self.role} transport received a {kind.value} prompt"
            )
        record = self.scenario.next_record(kind)
        if record.fail == "transient":
            raise TransientBackendError("scripted transient failure")
        if record.fail == "fatal":
            raise BackendUnavailableError("scripted fatal failure")
        return record.response


class EchoTransport:
    """Returns the prompt unchanged; used for round-trip parsing checks."""

    def complete(self, prompt: str) -> str:
        return prompt


class FailingTransport:
    """Always raises a transient error; exercises retry exhaustion."""

    def __init__(self) -> None:
        self.calls = 0

    def complete(self, prompt: str) -> str:
        self.calls += 1
        raise TransientBackendError("endpoint unreachable")


def _extract_feature_lines(prompt: str) -> list[DrebinFeature]:
    """Pull the current feature list out of a rendered manipulator prompt."""
    marker = "input features and explanation: "
    idx = prompt.rfind(marker)
    if idx >= 0:
        block = prompt[idx + len(marker):]
        head, _, _tail = block.partition("\nexplanation:")
        if head.startswith("features:\n"):
            head = head[len("features:\n"):]
        block = head
    else:
        marker = "input features: "
        idx = prompt.rfind(marker)
        if idx < 0:
            raise ValueError("prompt carries no feature block")
        block = prompt[idx + len(marker):]
    features = []
    for line in block.splitlines():
        line = line.strip()
        if "::" in line:
            try:
                features.append(DrebinFeature.parse(line))
            except ValueError:
                continue
    return features


class GreedyAdderTransport:
    """Manipulator mock that always adds the most benign-pulling feature.

    Candidates are ranked by their weight in a linear model (most negative
    first); the first candidate not already present is appended to the
    echoed feature list.  With the margin analyzer below, episode length
    becomes a pure function of the sample's starting margin.
    """

    def __init__(self, feature_weights: dict[DrebinFeature, float]):
        self.ranked = [
            f for f, _w in sorted(feature_weights.items(),
                                  key=lambda item: (item[1], item[0].serialize()))
        ]

    def complete(self, prompt: str) -> str:
        kind = infer_prompt_kind(prompt)
        if kind not in MANIPULATOR_KINDS:
            raise ScenarioMismatchError("greedy adder received an analyzer prompt")
        current = _extract_feature_lines(prompt)
        present = set(current)
        for candidate in self.ranked:
            if candidate not in present:
                lines = [f.serialize() for f in current] + [candidate.serialize()]
                return "\n".join(lines)
        raise BackendUnavailableError("no candidate features left to add")


class MarginAnalyzerTransport:
    """Analyzer mock that mirrors a linear detector's decision.

    Scores the prompt's feature list with the given weights and bias and
    answers Benign exactly when the margin is at or below zero, so the
    loop stops at the same moment the real detector flips.  Responses
    avoid feature syntax so they never pollute downstream prompt parsing.
    """

    def __init__(self, feature_weights: dict[DrebinFeature, float], bias: float):
        self.feature_weights = dict(feature_weights)
        self.bias = bias

    def complete(self, prompt: str) -> str:
        kind = infer_prompt_kind(prompt)
        if kind is not PromptKind.ANALYZE:
            raise ScenarioMismatchError("margin analyzer received a manipulator prompt")
        features = _extract_feature_lines(prompt)
        margin = self.bias + sum(
            self.feature_weights.get(f, 0.0) for f in features
        )
        if margin > 0:
            return (
                f"Malicious. The combined indicators outweigh the benign "
                f"signals; weighted score {margin:.4f} remains above the "
                f"detection threshold."
            )
        return (
            f"Benign. The declared capabilities are consistent with an "
            f"ordinary application; weighted score {margin:.4f} sits at or "
            f"below the detection threshold."
        )


def build_feature_set(lines: Iterable[str]) -> FeatureSet:
    """Convenience for tests and scenario authoring."""
    return FeatureSet(DrebinFeature.parse(line) for line in lines)
