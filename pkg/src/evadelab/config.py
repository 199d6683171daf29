"""Run configuration: one YAML document validated into frozen dataclasses.

Validation is exhaustive by contract: every violation in the document is
collected and reported in one error, so a user fixes a config in one
round trip instead of playing whack-a-mole.  Credentials never appear
here, only the names of environment variables that hold them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import ConfigError
from .resources import fixture_docs_dir

DETECTOR_KINDS = ("svm", "gbt", "nn")
TRANSPORT_KINDS = ("scripted", "greedy", "margin", "http")
MANIPULATOR_TRANSPORTS = ("scripted", "greedy", "http")
ANALYZER_TRANSPORTS = ("scripted", "margin", "http")
DEFENSE_MODES = ("replay", "reattack")


@dataclass(frozen=True)
class SeedConfig:
    split: int = 0
    train: int = 0
    attack: int = 0
    defense: int = 0


@dataclass(frozen=True)
class BackendConfig:
    name: str
    transport: str
    endpoint: str = ""
    model: str = ""
    credential_env: str = ""
    scenario: str = ""
    token_rate_limit: int = 0
    max_in_flight: int = 4
    max_prompt_tokens: int = 8000
    max_retries: int = 3


@dataclass(frozen=True)
class AttackSection:
    max_attempts: int = 10
    retrieval_k: int = 5
    context_budget: int = 12000
    workers: int = 4


@dataclass(frozen=True)
class DefenseSection:
    per_pairing: int = 50
    seed: int = 0
    mode: str = "replay"


@dataclass(frozen=True)
class EmbedderSection:
    seed: int = 0
    dimension: int = 384


@dataclass(frozen=True)
class RunConfig:
    dataset_dir: str
    output_dir: str
    corpus_dir: str
    split_fraction: float
    seeds: SeedConfig
    detectors: tuple[str, ...]
    nn_projection_dim: int
    embedder: EmbedderSection
    attack: AttackSection
    defense: DefenseSection
    backends: dict[str, BackendConfig] = field(default_factory=dict)
    manipulator: str = ""
    analyzer: str = ""


def _expect_mapping(raw: Any, key: str, problems: list[str]) -> dict:
    if raw is None:
        return {}
    if not isinstance(raw, Mapping):
        problems.append(f"{key}: expected a mapping, got {type(raw).__name__}")
        return {}
    return dict(raw)


def _expect_int(raw: Any, key: str, problems: list[str], default: int,
                minimum: int | None = None) -> int:
    if raw is None:
        raw = default
    if isinstance(raw, bool) or not isinstance(raw, int):
        problems.append(f"{key}: expected an integer, got {raw!r}")
        return default
    if minimum is not None and raw < minimum:
        problems.append(f"{key}: must be >= {minimum}, got {raw}")
    return raw


def _expect_str(raw: Any, key: str, problems: list[str], default: str = "") -> str:
    if raw is None:
        return default
    if not isinstance(raw, str):
        problems.append(f"{key}: expected a string, got {raw!r}")
        return default
    return raw


def parse_run_config(document: Mapping[str, Any] | None,
                     config_dir: Path | None = None) -> RunConfig:
    """Validate a parsed YAML mapping; raises ConfigError listing every problem.

    Relative paths resolve against ``config_dir`` (the config file's
    directory) when given, else the working directory.
    """
    problems: list[str] = []
    doc = _expect_mapping(document, "document", problems)
    base = config_dir if config_dir is not None else Path.cwd()

    def resolve(p: str) -> str:
        path = Path(p)
        return str(path if path.is_absolute() else base / path)

    dataset_dir = _expect_str(doc.get("dataset"), "dataset", problems)
    if not dataset_dir:
        problems.append("dataset: required")
    else:
        dataset_dir = resolve(dataset_dir)
        if not (Path(dataset_dir) / "manifest.txt").is_file():
            problems.append(f"dataset: no manifest.txt under {dataset_dir}")

    output_dir = _expect_str(doc.get("output"), "output", problems)
    if not output_dir:
        problems.append("output: required (or pass --out)")
    else:
        output_dir = resolve(output_dir)

    corpus_dir = _expect_str(doc.get("corpus"), "corpus", problems)
    corpus_dir = resolve(corpus_dir) if corpus_dir else str(fixture_docs_dir())
    if not Path(corpus_dir).is_dir():
        problems.append(f"corpus: directory {corpus_dir} does not exist")

    fraction_raw = doc.get("split_fraction", 0.8)
    fraction = 0.8
    if isinstance(fraction_raw, bool) or not isinstance(fraction_raw, (int, float)):
        problems.append(f"split_fraction: expected a number, got {fraction_raw!r}")
    elif not 0.0 < float(fraction_raw) < 1.0:
        problems.append(
            f"split_fraction: must lie strictly between 0 and 1, got {fraction_raw}"
        )
    else:
        fraction = float(fraction_raw)

    seeds_doc = _expect_mapping(doc.get("seeds"), "seeds", problems)
    seeds = SeedConfig(
        split=_expect_int(seeds_doc.get("split"), "seeds.split", problems, 0, 0),
        train=_expect_int(seeds_doc.get("train"), "seeds.train", problems, 0, 0),
        attack=_expect_int(seeds_doc.get("attack"), "seeds.attack", problems, 0, 0),
        defense=_expect_int(seeds_doc.get("defense"), "seeds.defense", problems, 0, 0),
    )

    detectors_raw = doc.get("detectors", ["svm"])
    detectors: tuple[str, ...] = ("svm",)
    if not isinstance(detectors_raw, list) or not detectors_raw:
        problems.append(f"detectors: expected a non-empty list, got {detectors_raw!r}")
    else:
        bad = [d for d in detectors_raw if d not in DETECTOR_KINDS]
        if bad:
            problems.append(
                f"detectors: unknown kinds {bad}; valid: {list(DETECTOR_KINDS)}"
            )
        if len(set(detectors_raw)) != len(detectors_raw):
            problems.append("detectors: duplicate entries")
        detectors = tuple(d for d in detectors_raw if d in DETECTOR_KINDS) or detectors

    nn_dim = _expect_int(doc.get("nn_projection_dim"), "nn_projection_dim",
                         problems, 256, 1)

    emb_doc = _expect_mapping(doc.get("embedder"), "embedder", problems)
    embedder = EmbedderSection(
        seed=_expect_int(emb_doc.get("seed"), "embedder.seed", problems, 0),
        dimension=_expect_int(emb_doc.get("dimension"), "embedder.dimension",
                              problems, 384, 1),
    )

    atk_doc = _expect_mapping(doc.get("attack"), "attack", problems)
    attack = AttackSection(
        max_attempts=_expect_int(atk_doc.get("max_attempts"), "attack.max_attempts",
                                 problems, 10, 1),
        retrieval_k=_expect_int(atk_doc.get("retrieval_k"), "attack.retrieval_k",
                                problems, 5, 1),
        context_budget=_expect_int(atk_doc.get("context_budget"),
                                   "attack.context_budget", problems, 12000, 1),
        workers=_expect_int(atk_doc.get("workers"), "attack.workers", problems, 4, 1),
    )

    def_doc = _expect_mapping(doc.get("defense"), "defense", problems)
    mode = _expect_str(def_doc.get("mode"), "defense.mode", problems, "replay")
    if mode not in DEFENSE_MODES:
        problems.append(f"defense.mode: must be one of {list(DEFENSE_MODES)}, got {mode!r}")
        mode = "replay"
    defense = DefenseSection(
        per_pairing=_expect_int(def_doc.get("per_pairing"), "defense.per_pairing",
                                problems, 50, 1),
        seed=_expect_int(def_doc.get("seed"), "defense.seed", problems, 0, 0),
        mode=mode,
    )

    backends_doc = _expect_mapping(doc.get("backends"), "backends", problems)
    backends: dict[str, BackendConfig] = {}
    for name, raw in backends_doc.items():
        bdoc = _expect_mapping(raw, f"backends.{name}", problems)
        transport = _expect_str(bdoc.get("transport"), f"backends.{name}.transport",
                                problems)
        if transport not in TRANSPORT_KINDS:
            problems.append(
                f"backends.{name}.transport: must be one of {list(TRANSPORT_KINDS)},"
                f" got {transport!r}"
            )
        scenario = _expect_str(bdoc.get("scenario"), f"backends.{name}.scenario",
                               problems)
        if scenario:
            scenario = resolve(scenario)
        endpoint = _expect_str(bdoc.get("endpoint"), f"backends.{name}.endpoint",
                               problems)
        if transport == "scripted":
            if not scenario:
                problems.append(f"backends.{name}: scripted transport needs a scenario")
            elif not Path(scenario).is_file():
                problems.append(
                    f"backends.{name}.scenario: file {scenario} does not exist"
                )
        if transport == "http" and not endpoint:
            problems.append(f"backends.{name}: http transport needs an endpoint")
        if transport in ("greedy", "margin") and "svm" not in detectors:
            problems.append(
                f"backends.{name}: {transport} transport derives weights from the"
                " svm detector; add svm to detectors"
            )
        backends[name] = BackendConfig(
            name=name,
            transport=transport,
            endpoint=endpoint,
            model=_expect_str(bdoc.get("model"), f"backends.{name}.model", problems),
            credential_env=_expect_str(bdoc.get("credential_env"),
                                       f"backends.{name}.credential_env", problems),
            scenario=scenario,
            token_rate_limit=_expect_int(bdoc.get("token_rate_limit"),
                                         f"backends.{name}.token_rate_limit",
                                         problems, 0, 0),
            max_in_flight=_expect_int(bdoc.get("max_in_flight"),
                                      f"backends.{name}.max_in_flight", problems, 4, 1),
            max_prompt_tokens=_expect_int(bdoc.get("max_prompt_tokens"),
                                          f"backends.{name}.max_prompt_tokens",
                                          problems, 8000, 1),
            max_retries=_expect_int(bdoc.get("max_retries"),
                                    f"backends.{name}.max_retries", problems, 3, 0),
        )

    manipulator = _expect_str(doc.get("manipulator"), "manipulator", problems)
    analyzer = _expect_str(doc.get("analyzer"), "analyzer", problems)
    for role, name, allowed in (
        ("manipulator", manipulator, MANIPULATOR_TRANSPORTS),
        ("analyzer", analyzer, ANALYZER_TRANSPORTS),
    ):
        if not name:
            problems.append(f"{role}: required")
            continue
        if name not in backends:
            problems.append(f"{role}: no backend named {name!r}")
            continue
        transport = backends[name].transport
        if transport in TRANSPORT_KINDS and transport not in allowed:
            problems.append(
                f"{role}: backend {name!r} uses transport {transport!r},"
                f" valid for this role: {list(allowed)}"
            )
    if (
        manipulator in backends
        and analyzer in backends
        and backends[manipulator].transport == "scripted"
        and backends[analyzer].transport == "scripted"
        and backends[manipulator].scenario != backends[analyzer].scenario
    ):
        problems.append(
            "manipulator/analyzer: scripted roles must share one scenario file"
        )

    if problems:
        raise ConfigError(problems)
    return RunConfig(
        dataset_dir=dataset_dir,
        output_dir=output_dir,
        corpus_dir=corpus_dir,
        split_fraction=fraction,
        seeds=seeds,
        detectors=detectors,
        nn_projection_dim=nn_dim,
        embedder=embedder,
        attack=attack,
        defense=defense,
        backends=backends,
        manipulator=manipulator,
        analyzer=analyzer,
    )


def load_run_config(path: str | Path,
                    overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Read a YAML config file, apply flat overrides, validate."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError([f"config file {p} does not exist"])
    try:
        document = yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError([f"config is not valid YAML: {exc}"]) from exc
    doc = dict(document) if isinstance(document, Mapping) else document
    if overrides:
        if not isinstance(doc, dict):
            doc = {}
        doc = apply_overrides(doc, overrides)
    return parse_run_config(doc, config_dir=p.parent)


def apply_overrides(doc: dict, overrides: Mapping[str, Any]) -> dict:
    """Apply CLI override flags onto a raw config mapping.

    Known keys: out, seed (sets every seed), detector, manipulator,
    analyzer, mock_scenario, max_attempts.  ``mock_scenario`` swaps both
    agent roles onto fresh scripted backends reading one scenario file.
    """
    doc = dict(doc)
    if overrides.get("out"):
        doc["output"] = overrides["out"]
    if overrides.get("seed") is not None:
        seed = overrides["seed"]
        doc["seeds"] = {"split": seed, "train": seed, "attack": seed, "defense": seed}
    if overrides.get("detector"):
        doc["detectors"] = [overrides["detector"]]
    if overrides.get("manipulator"):
        doc["manipulator"] = overrides["manipulator"]
    if overrides.get("analyzer"):
        doc["analyzer"] = overrides["analyzer"]
    if overrides.get("max_attempts") is not None:
        attack = dict(doc.get("attack") or {})
        attack["max_attempts"] = overrides["max_attempts"]
        doc["attack"] = attack
    if overrides.get("mock_scenario"):
        backends = dict(doc.get("backends") or {})
        backends["scripted-manipulator"] = {
            "transport": "scripted", "scenario": overrides["mock_scenario"],
        }
        backends["scripted-analyzer"] = {
            "transport": "scripted", "scenario": overrides["mock_scenario"],
        }
        doc["backends"] = backends
        doc["manipulator"] = "scripted-manipulator"
        doc["analyzer"] = "scripted-analyzer"
    return doc
