"""Run-directory orchestration: train, evaluate, attack, defend, report.

Every command operates on one output directory.  A manifest is written
there once, before any result file, and never touched again; repeated
commands verify that the stored configuration matches before adding
artifacts.  Timestamps live only in the manifest and the status file, so
results tables, traces, and reports are byte-identical across reruns
with the same seeds.
"""

from __future__ import annotations

import json
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .agents import BackendDescriptor
from .attack import AttackConfig, AttackTrace, finalize, parse_trace, run_attack, serialize_trace
from .backends import Backend, Clock, HttpChatTransport
from .config import BackendConfig, RunConfig
from .dataset import Dataset, encode_dataset, load_dataset, split_dataset
from .defense import (
    AugmentationPlan,
    encode_with_projection,
    evaluate_defense,
    retrain_with_augmentation,
    sample_adversarial,
)
from .detectors import (
    DetectorModel,
    SvmParameters,
    TrainingConfig,
    load_model,
    predict_batch,
    save_model,
    train,
)
from .errors import ConfigError, EmptyPopulationError, MalformedInputError
from .features import DrebinFeature, FeatureVocabulary, build_vocabulary
from .metrics import attack_summary, confusion, rates
from .mocks import (
    GreedyAdderTransport,
    MarginAnalyzerTransport,
    ScriptedScenario,
    ScriptedTransport,
)
from .projection import ProjectionSpec
from .rag import ChunkIndex, HashingEmbedder, build_index, chunk_corpus, load_corpus_dir

RESULTS_HEADER = "detector,pairing,sample_id,outcome,attempts,evaded,success"
EVAL_HEADER = "detector,samples,accuracy,tpr,fpr,f1"
SUMMARY_HEADER = (
    "detector,pairing,attacked,evaded,success,evasion_rate,asr,mean_attempts"
)
HISTOGRAM_HEADER = "detector,pairing,attempts,count"


class ArtifactMissingError(FileNotFoundError):
    """A command needs an artifact an earlier command has not produced."""


@dataclass(frozen=True)
class RunPaths:
    """Layout of one run directory."""

    root: Path

    @property
    def manifest(self) -> Path:
        return self.root / "manifest.json"

    @property
    def status(self) -> Path:
        return self.root / "status.json"

    @property
    def vocab(self) -> Path:
        return self.root / "vocab.txt"

    @property
    def split(self) -> Path:
        return self.root / "split.json"

    @property
    def models_dir(self) -> Path:
        return self.root / "models"

    def model_path(self, kind: str) -> Path:
        return self.models_dir / f"{kind}.model"

    @property
    def eval_csv(self) -> Path:
        return self.root / "eval.csv"

    @property
    def traces_dir(self) -> Path:
        return self.root / "traces"

    def trace_dir(self, kind: str) -> Path:
        return self.traces_dir / kind

    @property
    def results_csv(self) -> Path:
        return self.root / "results.csv"

    @property
    def report_dir(self) -> Path:
        return self.root / "report"

    @property
    def defense_dir(self) -> Path:
        return self.root / "defense"

    @property
    def defense_csv(self) -> Path:
        return self.defense_dir / "defense.csv"


def _write_text(path: Path, text: str) -> None:
    # write-then-rename so readers never observe a partial file
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def write_manifest_once(paths: RunPaths, config: RunConfig) -> None:
    """Create the run manifest if absent; refuse a mismatched rerun.

    The manifest holds the full configuration snapshot, component
    versions, and the creation timestamp.  It is the only place a clock
    reading enters the run directory besides the status file.
    """
    # round-trip through JSON so tuples compare equal to reloaded lists
    snapshot = json.loads(json.dumps(asdict(config), sort_keys=True))
    if paths.manifest.exists():
        existing = json.loads(paths.manifest.read_text(encoding="utf-8"))
        if existing.get("config") != snapshot:
            raise ConfigError(
                [f"output directory {paths.root} was initialized with a different"
                 " configuration; use a fresh directory"]
            )
        return
    manifest = {
        "config": snapshot,
        "versions": {
            "evadelab": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    _write_text(paths.manifest, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def record_status(paths: RunPaths, command: str, info: dict) -> None:
    status = {}
    if paths.status.exists():
        status = json.loads(paths.status.read_text(encoding="utf-8"))
    entry = dict(info)
    entry["finished_utc"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    status[command] = entry
    _write_text(paths.status, json.dumps(status, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- training


def _training_config(config: RunConfig) -> TrainingConfig:
    return TrainingConfig(seed=config.seeds.train)


def evaluate_models_table(
    kinds: tuple[str, ...],
    models: dict[str, DetectorModel],
    dataset: Dataset,
    vocab: FeatureVocabulary,
) -> str:
    """CSV metrics table over one dataset, detectors in the given order."""
    feature_sets = dataset.feature_sets()
    truth = [int(v) for v in dataset.labels()]
    lines = [EVAL_HEADER]
    for kind in kinds:
        model = models[kind]
        x = encode_with_projection(feature_sets, vocab, model.projection)
        labels, _scores = predict_batch(model, x)
        c = confusion([int(v) for v in labels], truth)
        r = rates(c)
        lines.append(
            f"{kind},{c.total},{r.accuracy:.6f},{r.tpr:.6f},{r.fpr:.6f},{r.f1:.6f}"
        )
    return "\n".join(lines) + "\n"


def run_train(config: RunConfig) -> dict[str, DetectorModel]:
    """Split, build the vocabulary, fit every configured detector, evaluate.

    Artifacts: vocab.txt, split.json, models/<kind>.model, eval.csv.  The
    vocabulary is built from the training split only, so features seen
    first at test time drop out of the encoding exactly as they would for
    a deployed detector.
    """
    paths = RunPaths(Path(config.output_dir))
    paths.root.mkdir(parents=True, exist_ok=True)
    write_manifest_once(paths, config)

    dataset = load_dataset(config.dataset_dir)
    train_ids, test_ids = split_dataset(
        dataset, fraction=config.split_fraction, seed=config.seeds.split
    )
    train_set = dataset.subset(train_ids)
    test_set = dataset.subset(test_ids)
    vocab = build_vocabulary(train_set.feature_sets())

    _write_text(paths.vocab, "\n".join(vocab.serialize_lines()) + "\n")
    _write_text(
        paths.split,
        json.dumps({"train": train_ids, "test": test_ids}, indent=2) + "\n",
    )

    x_raw, y, _dropped = encode_dataset(train_set, vocab)
    tcfg = _training_config(config)
    models: dict[str, DetectorModel] = {}
    for kind in config.detectors:
        if kind == "nn":
            spec = ProjectionSpec.create(
                seed=config.seeds.train,
                input_dim=len(vocab),
                output_dim=config.nn_projection_dim,
            )
            x_in = encode_with_projection(train_set.feature_sets(), vocab, spec)
            model = train("nn", x_in, y, tcfg, projection=spec)
        else:
            model = train(kind, x_raw, y, tcfg)
        paths.models_dir.mkdir(parents=True, exist_ok=True)
        save_model(model, paths.model_path(kind))
        models[kind] = model

    table = evaluate_models_table(config.detectors, models, test_set, vocab)
    _write_text(paths.eval_csv, table)
    record_status(
        paths,
        "train",
        {
            "train_samples": len(train_ids),
            "test_samples": len(test_ids),
            "vocabulary_size": len(vocab),
            "detectors": list(config.detectors),
        },
    )
    return models


@dataclass(frozen=True)
class Artifacts:
    dataset: Dataset
    vocab: FeatureVocabulary
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    models: dict[str, DetectorModel]

    @property
    def train_set(self) -> Dataset:
        return self.dataset.subset(self.train_ids)

    @property
    def test_set(self) -> Dataset:
        return self.dataset.subset(self.test_ids)


def load_artifacts(config: RunConfig) -> Artifacts:
    paths = RunPaths(Path(config.output_dir))
    needed = [paths.vocab, paths.split]
    needed += [paths.model_path(kind) for kind in config.detectors]
    missing = [p for p in needed if not p.is_file()]
    if missing:
        raise ArtifactMissingError(
            f"missing run artifacts {[str(p) for p in missing]}; run train first"
        )
    vocab = FeatureVocabulary.from_lines(
        paths.vocab.read_text(encoding="utf-8").splitlines()
    )
    split = json.loads(paths.split.read_text(encoding="utf-8"))
    models = {kind: load_model(paths.model_path(kind)) for kind in config.detectors}
    return Artifacts(
        dataset=load_dataset(config.dataset_dir),
        vocab=vocab,
        train_ids=tuple(split["train"]),
        test_ids=tuple(split["test"]),
        models=models,
    )


def run_eval(config: RunConfig) -> str:
    """Re-derive the held-out metrics table from saved artifacts."""
    paths = RunPaths(Path(config.output_dir))
    write_manifest_once(paths, config)
    art = load_artifacts(config)
    table = evaluate_models_table(config.detectors, art.models, art.test_set, art.vocab)
    _write_text(paths.eval_csv, table)
    record_status(paths, "eval", {"detectors": list(config.detectors)})
    return table


# ------------------------------------------------------------------ attack


def select_attack_population(
    dataset: Dataset, vocab: FeatureVocabulary, model: DetectorModel
) -> list[str]:
    """Malicious-labeled samples the detector currently flags (true positives).

    False negatives already evade and carry no attack signal; benign
    samples are out of scope.  Order follows the dataset.
    """
    candidates = [s for s in dataset if s.label == "malicious"]
    selected: list[str] = []
    if candidates:
        x = encode_with_projection(
            [s.features for s in candidates], vocab, model.projection
        )
        labels, _scores = predict_batch(model, x)
        selected = [
            s.sample_id for s, flag in zip(candidates, labels) if int(flag) == 1
        ]
    if not selected:
        raise EmptyPopulationError("no true-positive malicious samples to attack")
    return selected


def linear_feature_weights(
    model: DetectorModel, vocab: FeatureVocabulary
) -> tuple[dict[DrebinFeature, float], float]:
    """Per-feature weight map for the margin-mirroring mock transports."""
    if not isinstance(model.params, SvmParameters):
        raise ValueError("weight-guided transports need a linear (svm) model")
    if model.input_dim != len(vocab):
        raise ValueError(
            f"model expects {model.input_dim} features, vocabulary has {len(vocab)}"
        )
    weights = {
        vocab.feature_at(i): float(model.params.weights[i]) for i in range(len(vocab))
    }
    return weights, float(model.params.bias)


def _descriptor(bcfg: BackendConfig) -> BackendDescriptor:
    # scripted runs pin retries to zero: each scenario record is consumed
    # exactly once, keeping conformance traces deterministic
    return BackendDescriptor(
        name=bcfg.name,
        endpoint=bcfg.endpoint or f"mock:{bcfg.transport}",
        token_rate_limit=bcfg.token_rate_limit,
        max_in_flight=bcfg.max_in_flight,
        max_prompt_tokens=bcfg.max_prompt_tokens,
        credential_env=bcfg.credential_env or None,
        model=bcfg.model or None,
        max_retries=0 if bcfg.transport == "scripted" else bcfg.max_retries,
    )


def make_backend_factory(
    config: RunConfig,
    svm_model: DetectorModel | None,
    vocab: FeatureVocabulary,
    clock: Clock | None = None,
):
    """() -> (manipulator, analyzer) Backends for one episode.

    Scripted roles load a fresh scenario per episode so parallel episodes
    never share a cursor; stateless transports are built once and shared.
    """
    mcfg = config.backends[config.manipulator]
    acfg = config.backends[config.analyzer]

    weights: dict[DrebinFeature, float] | None = None
    bias = 0.0
    if "greedy" in (mcfg.transport, acfg.transport) or "margin" in (
        mcfg.transport,
        acfg.transport,
    ):
        if svm_model is None:
            raise ConfigError(
                ["greedy/margin transports need a trained svm model in this run"]
            )
        weights, bias = linear_feature_weights(svm_model, vocab)

    def build_static(bcfg: BackendConfig, role: str) -> Backend | None:
        if bcfg.transport == "greedy":
            assert weights is not None
            return Backend(_descriptor(bcfg), GreedyAdderTransport(weights), clock)
        if bcfg.transport == "margin":
            assert weights is not None
            return Backend(
                _descriptor(bcfg), MarginAnalyzerTransport(weights, bias), clock
            )
        if bcfg.transport == "http":
            return Backend(_descriptor(bcfg), HttpChatTransport(_descriptor(bcfg)), clock)
        return None  # scripted: per-episode

    static_manipulator = build_static(mcfg, "manipulator")
    static_analyzer = build_static(acfg, "analyzer")

    def factory() -> tuple[Backend, Backend]:
        manipulator = static_manipulator
        analyzer = static_analyzer
        if mcfg.transport == "scripted" and acfg.transport == "scripted":
            scenario = ScriptedScenario.load(mcfg.scenario)
            manipulator = Backend(
                _descriptor(mcfg), ScriptedTransport(scenario, "manipulator"), clock
            )
            analyzer = Backend(
                _descriptor(acfg), ScriptedTransport(scenario, "analyzer"), clock
            )
        elif mcfg.transport == "scripted":
            scenario = ScriptedScenario.load(mcfg.scenario)
            manipulator = Backend(
                _descriptor(mcfg), ScriptedTransport(scenario, "manipulator"), clock
            )
        elif acfg.transport == "scripted":
            scenario = ScriptedScenario.load(acfg.scenario)
            analyzer = Backend(
                _descriptor(acfg), ScriptedTransport(scenario, "analyzer"), clock
            )
        assert manipulator is not None and analyzer is not None
        return manipulator, analyzer

    return factory


def build_run_index(config: RunConfig) -> ChunkIndex:
    documents = load_corpus_dir(config.corpus_dir)
    chunks = chunk_corpus(documents)
    provider = HashingEmbedder(
        seed=config.embedder.seed, dimension=config.embedder.dimension
    )
    return build_index(chunks, provider)


def pairing_name(config: RunConfig) -> str:
    return f"{config.manipulator}--{config.analyzer}"


def _trace_filename(sample_id: str) -> str:
    return sample_id.replace("/", "__") + ".trace"


@dataclass(frozen=True)
class EpisodeResult:
    detector: str
    pairing: str
    trace: AttackTrace
    success: bool  # detector-verified: the final set flips the model


def run_attack_campaign(
    config: RunConfig, clock: Clock | None = None
) -> dict[str, list[EpisodeResult]]:
    """Attack every configured detector's true-positive population.

    Episodes fan out over a bounded worker pool; results are collected
    and written in sample-id order so the tables never depend on thread
    scheduling.  Artifacts: traces/<kind>/<sample>.trace, results.csv.
    """
    paths = RunPaths(Path(config.output_dir))
    write_manifest_once(paths, config)
    art = load_artifacts(config)
    index = build_run_index(config)
    pairing = pairing_name(config)
    attack_cfg = AttackConfig(
        max_attempts=config.attack.max_attempts,
        retrieval_k=config.attack.retrieval_k,
        context_budget=config.attack.context_budget,
    )
    factory = make_backend_factory(config, art.models.get("svm"), art.vocab, clock)

    results: dict[str, list[EpisodeResult]] = {}
    for kind in config.detectors:
        model = art.models[kind]
        test_set = art.test_set
        population = select_attack_population(test_set, art.vocab, model)

        def episode(sample_id: str) -> AttackTrace:
            manipulator, analyzer = factory()
            return run_attack(
                sample_id,
                test_set[sample_id].features,
                manipulator=manipulator,
                analyzer=analyzer,
                index=index,
                config=attack_cfg,
            )

        with ThreadPoolExecutor(max_workers=config.attack.workers) as pool:
            traces = list(pool.map(episode, population))
        traces.sort(key=lambda t: t.sample_id)

        kind_dir = paths.trace_dir(kind)
        episodes = []
        for trace in traces:
            _write_text(kind_dir / _trace_filename(trace.sample_id), serialize_trace(trace))
            episodes.append(
                EpisodeResult(
                    detector=kind,
                    pairing=pairing,
                    trace=trace,
                    success=trace.evaded and finalize(trace, art.vocab, model),
                )
            )
        results[kind] = episodes

    lines = [RESULTS_HEADER]
    for kind in config.detectors:
        for ep in results[kind]:
            t = ep.trace
            lines.append(
                f"{ep.detector},{ep.pairing},{t.sample_id},{t.outcome},"
                f"{t.attempts_used},{str(t.evaded).lower()},{str(ep.success).lower()}"
            )
    _write_text(paths.results_csv, "\n".join(lines) + "\n")
    record_status(
        paths,
        "attack",
        {
            "pairing": pairing,
            "index_fingerprint": index.fingerprint,
            "attacked": {kind: len(eps) for kind, eps in results.items()},
        },
    )
    return results


def load_traces(paths: RunPaths, kind: str) -> list[AttackTrace]:
    kind_dir = paths.trace_dir(kind)
    files = sorted(kind_dir.glob("*.trace")) if kind_dir.is_dir() else []
    if not files:
        raise ArtifactMissingError(
            f"no attack traces under {kind_dir}; run attack first"
        )
    return [parse_trace(p.read_text(encoding="utf-8")) for p in files]


# ----------------------------------------------------------------- defense


def run_defense(config: RunConfig, clock: Clock | None = None) -> str:
    """Augment, retrain, and re-measure every configured detector.

    Adversarial finals sampled from the successful traces join the
    training split labeled malicious; the vocabulary is rebuilt so their
    added features gain columns.  The report compares attack success
    before and after, by replaying finals or by re-running episodes
    against the hardened detector (``defense.mode: reattack``, svm only).
    """
    paths = RunPaths(Path(config.output_dir))
    write_manifest_once(paths, config)
    art = load_artifacts(config)
    pairing = pairing_name(config)
    plan = AugmentationPlan(
        per_pairing=config.defense.per_pairing, seed=config.defense.seed
    )
    tcfg = _training_config(config)

    all_rows = []
    for kind in config.detectors:
        model = art.models[kind]
        traces = load_traces(paths, kind)
        successes = [
            t for t in traces if t.evaded and finalize(t, art.vocab, model)
        ]
        sampling = sample_adversarial({pairing: successes}, plan)
        after_model, after_vocab = retrain_with_augmentation(
            art.train_set,
            sampling.feature_sets(),
            kind,
            tcfg,
            projection_dim=config.nn_projection_dim if kind == "nn" else None,
        )

        after_traces = None
        if config.defense.mode == "reattack":
            if kind != "svm":
                raise ConfigError(
                    ["defense.mode reattack supports the svm detector only"]
                )
            after_traces = {
                pairing: _reattack(config, art, after_model, after_vocab, traces, clock)
            }

        report = evaluate_defense(
            kind,
            {pairing: traces},
            model,
            art.vocab,
            after_model,
            after_vocab,
            after_traces_by_pairing=after_traces,
        )
        all_rows.extend(report.rows)

        kind_dir = paths.defense_dir / kind
        kind_dir.mkdir(parents=True, exist_ok=True)
        save_model(after_model, kind_dir / "model.retrained")
        _write_text(kind_dir / "vocab.txt", "\n".join(after_vocab.serialize_lines()) + "\n")

    table = _combined_table(all_rows) + "\n"
    _write_text(paths.defense_csv, table)
    record_status(
        paths,
        "defend",
        {"pairing": pairing, "mode": config.defense.mode,
         "per_pairing": config.defense.per_pairing},
    )
    return table


def _combined_table(rows) -> str:
    lines = ["detector,pairing,attacked,asr_before,asr_after,reduction"]
    for row in rows:
        lines.append(
            f"{row.detector},{row.pairing},{row.attacked},"
            f"{row.asr_before:.6f},{row.asr_after:.6f},{row.reduction:.6f}"
        )
    return "\n".join(lines)


def _reattack(
    config: RunConfig,
    art: Artifacts,
    after_model: DetectorModel,
    after_vocab: FeatureVocabulary,
    traces: list[AttackTrace],
    clock: Clock | None,
) -> list[AttackTrace]:
    """Re-run every original episode against the hardened detector."""
    index = build_run_index(config)
    attack_cfg = AttackConfig(
        max_attempts=config.attack.max_attempts,
        retrieval_k=config.attack.retrieval_k,
        context_budget=config.attack.context_budget,
    )
    factory = make_backend_factory(config, after_model, after_vocab, clock)

    def episode(trace: AttackTrace) -> AttackTrace:
        manipulator, analyzer = factory()
        return run_attack(
            trace.sample_id,
            trace.base_features,
            manipulator=manipulator,
            analyzer=analyzer,
            index=index,
            config=attack_cfg,
        )

    with ThreadPoolExecutor(max_workers=config.attack.workers) as pool:
        rerun = list(pool.map(episode, traces))
    rerun.sort(key=lambda t: t.sample_id)
    return rerun


# ------------------------------------------------------------------ report


def run_report(config: RunConfig) -> str:
    """Aggregate results.csv into plot-ready summary and histogram tables.

    Fails, producing nothing, when the results table is absent or empty.
    ``asr`` counts detector-verified successes; ``evasion_rate`` counts
    loop-level analyzer evasions.  The histogram buckets attempts used by
    verified successes over 1..max_attempts.
    """
    paths = RunPaths(Path(config.output_dir))
    if not paths.results_csv.is_file():
        raise ArtifactMissingError(f"{paths.results_csv} not found; run attack first")
    lines = paths.results_csv.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != RESULTS_HEADER:
        raise MalformedInputError(f"{paths.results_csv} has an unexpected header")
    rows = [line.split(",") for line in lines[1:] if line]
    if not rows:
        raise ArtifactMissingError(f"{paths.results_csv} holds no episodes")

    groups: dict[tuple[str, str], list[tuple[bool, bool, int]]] = {}
    order: list[tuple[str, str]] = []
    for detector, pairing, _sid, _outcome, attempts, evaded, success in rows:
        key = (detector, pairing)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append((evaded == "true", success == "true", int(attempts)))

    summary_lines = [SUMMARY_HEADER]
    histogram_lines = [HISTOGRAM_HEADER]
    cap = config.attack.max_attempts
    for detector, pairing in order:
        episodes = groups[(detector, pairing)]
        summary = attack_summary(
            ((success, attempts) for _evaded, success, attempts in episodes), cap
        )
        evaded_count = sum(1 for evaded, _s, _a in episodes if evaded)
        mean = f"{summary.mean_attempts:.6f}" if summary.evaded else ""
        summary_lines.append(
            f"{detector},{pairing},{summary.attacked},{evaded_count},{summary.evaded},"
            f"{evaded_count / summary.attacked:.6f},{summary.asr:.6f},{mean}"
        )
        for attempts, count in summary.histogram():
            histogram_lines.append(f"{detector},{pairing},{attempts},{count}")

    summary_table = "\n".join(summary_lines) + "\n"
    _write_text(paths.report_dir / "summary.csv", summary_table)
    _write_text(paths.report_dir / "histogram.csv", "\n".join(histogram_lines) + "\n")
    record_status(paths, "report", {"groups": len(order)})
    return summary_table
