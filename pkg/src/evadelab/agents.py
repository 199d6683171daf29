"""Prompt construction and response parsing for the two attack agents.

The attack uses two independent agent roles: a manipulator that proposes
feature additions and an analyzer that issues a Malicious/Benign verdict
with an explanation.  Three fixed prompt templates drive them: the initial
proposal, the analysis, and the guided revision sent after a malicious
verdict.  Everything in this module is pure; transport lives in
`backends`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Union

from .errors import UnparseableResponseError
from .features import CATEGORY_TOKENS, DrebinFeature, FeatureSet
from .rag import ContextWindow


class PromptKind(Enum):
    """The three prompt shapes of the attack protocol."""

    PROPOSE = "propose"  # first manipulation request
    ANALYZE = "analyze"  # verdict request, never reveals perturbations
    REVISE = "revise"  # re-manipulation guided by the analyzer explanation


PROPOSE_TEMPLATE = (
    "You are an Android malware manipulator. Your goal is to evade ML-based "
    "Android malware detection. Please add only one Drebin feature to the "
    "input features based on the context below. The output should be the "
    "modified feature set including input features.\n"
    "context: {CONTEXT}\n"
    "input features: {QUERY}"
)

ANALYZE_TEMPLATE = (
    "You are an Android malware analyzer. Your goal is to detect malware "
    "based on the input Drebin features and the context below. If it is "
    'malware, the output should be "Malicious" with the explanation. If it '
    'is goodware, the output should be "Benign" with the explanation.\n'
    "context: {CONTEXT}\n"
    "input features: {QUERY}"
)

REVISE_TEMPLATE = (
    "You are an Android malware manipulator. Your goal is to evade ML-based "
    "Android malware detection. An Android expert classifies the APK as "
    "malware with its explanation based on the input features. Informed by "
    "the input features with explanation and the context below, you can: "
    "(1) either add only one new Drebin feature to the input features, "
    "(2) or remove the last added feature {LAST_ADDED_FEATURE} and add only "
    "one different Drebin feature. The output should be the modified feature "
    "set including input features.\n"
    "context: {CONTEXT}\n"
    "input features and explanation: {QUERY}"
)

_ROLE_TEXT = {
    PromptKind.PROPOSE: "manipulator",
    PromptKind.ANALYZE: "analyzer",
    PromptKind.REVISE: "manipulator",
}


@dataclass(frozen=True)
class BackendDescriptor:
    """How to reach one text-generation backend and how hard to push it.

    `credential_env` names an environment variable; the key itself is never
    stored in configuration or run manifests.  `token_rate_limit` is
    whitespace tokens per minute, 0 meaning unlimited.
    """

    name: str
    endpoint: str
    token_rate_limit: int = 0
    max_in_flight: int = 4
    max_prompt_tokens: int = 8000
    temperature: float = 0.0
    credential_env: str | None = None
    model: str | None = None
    max_retries: int = 3
    backoff_base_seconds: float = 0.5

    def __post_init__(self) -> None:
        if self.temperature != 0.0:
            raise ValueError("backends run at temperature 0 only")
        if self.token_rate_limit < 0 or self.max_in_flight < 1:
            raise ValueError("invalid backend limits")


@dataclass(frozen=True)
class AnalyzerVerdict:
    label: str  # "Malicious" | "Benign"
    explanation: str

    @property
    def is_benign(self) -> bool:
        return self.label == "Benign"


@dataclass(frozen=True)
class ManipulatorOutput:
    features: FeatureSet  # as proposed; validity is judged by the attack loop
    raw_text: str


def count_tokens(text: str) -> int:
    return len(text.split())


def _render_context(context: Union[ContextWindow, str, None]) -> str:
    if context is None:
        return ""
    if isinstance(context, ContextWindow):
        return context.render()
    return context


def build_prompt(
    kind: PromptKind,
    context: Union[ContextWindow, str, None],
    features: FeatureSet,
    *,
    explanation: str | None = None,
    last_added: DrebinFeature | None = None,
) -> str:
    """Render the template for `kind` with context and feature lines.

    The revision prompt additionally requires the analyzer explanation and
    the most recently added feature.  The analysis prompt presents the
    feature set uniformly, with nothing marking which features were added.
    """
    feature_block = "\n".join(f.serialize() for f in features)
    rendered_context = _render_context(context)
    if kind is PromptKind.PROPOSE:
        return PROPOSE_TEMPLATE.replace("{CONTEXT}", rendered_context).replace(
            "{QUERY}", feature_block
        )
    if kind is PromptKind.ANALYZE:
        if last_added is not None:
            raise ValueError("analysis prompts must not reveal added features")
        return ANALYZE_TEMPLATE.replace("{CONTEXT}", rendered_context).replace(
            "{QUERY}", feature_block
        )
    if kind is PromptKind.REVISE:
        if last_added is None:
            raise ValueError("revision prompts require the last added feature")
        if not explanation:
            raise ValueError("revision prompts require the analyzer explanation")
        query = f"features:\n{feature_block}\nexplanation:\n{explanation}"
        return (
            REVISE_TEMPLATE.replace("{LAST_ADDED_FEATURE}", last_added.serialize())
            .replace("{CONTEXT}", rendered_context)
            .replace("{QUERY}", query)
        )
    raise ValueError(f"unknown prompt kind {kind!r}")


def infer_prompt_kind(prompt: str) -> PromptKind:
    """Recover the prompt kind from its rendered text (used by mocks)."""
    if prompt.startswith("You are an Android malware analyzer."):
        return PromptKind.ANALYZE
    if prompt.startswith("You are an Android malware manipulator."):
        if "An Android expert classifies the APK as malware" in prompt:
            return PromptKind.REVISE
        return PromptKind.PROPOSE
    raise ValueError("text does not match any known prompt template")


_FEATURE_SPAN = re.compile(r"\b([a-z_]+)::(\S+)")


def parse_manipulator_output(text: str, base: FeatureSet) -> ManipulatorOutput:
    """Extract `category::value` occurrences from a model response.

    Tolerates prose, bullets, and code fences around the feature lines.
    Duplicates collapse, order is preserved, and no validity judgment is
    made here; the attack loop decides whether the proposal is acceptable.
    The base set is accepted for auditing symmetry but never consulted.
    """
    found: list[DrebinFeature] = []
    seen: set[DrebinFeature] = set()
    for match in _FEATURE_SPAN.finditer(text):
        token, value = match.group(1), match.group(2)
        if token not in CATEGORY_TOKENS:
            continue
        value = value.rstrip(",.;`'\"*")
        if not value:
            continue
        try:
            feature = DrebinFeature.parse(f"{token}::{value}")
        except ValueError:
            continue
        if feature not in seen:
            seen.add(feature)
            found.append(feature)
    if not found:
        raise UnparseableResponseError(
            "manipulator response contains no recognizable feature lines"
        )
    return ManipulatorOutput(FeatureSet(found), text)


_VERDICT_TOKEN = re.compile(r"\b(malicious|benign)\b", re.IGNORECASE)


def parse_analyzer_output(text: str) -> AnalyzerVerdict:
    """First standalone Malicious/Benign token decides the label.

    The explanation is the remaining text; if stripping the token leaves
    nothing, the full response stands in so a malicious verdict always
    carries a non-empty explanation.
    """
    match = _VERDICT_TOKEN.search(text)
    if match is None:
        raise UnparseableResponseError(
            "analyzer response contains neither verdict token"
        )
    label = "Malicious" if match.group(1).lower() == "malicious" else "Benign"
    remainder = (text[: match.start()] + text[match.end() :]).strip()
    explanation = remainder if remainder else text.strip()
    return AnalyzerVerdict(label=label, explanation=explanation)
