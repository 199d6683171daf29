"""Run pipeline: config validation, campaign commands, CLI behavior."""

import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from evadelab import cli
from evadelab.campaign import (
    RunPaths,
    linear_feature_weights,
    load_traces,
    run_attack_campaign,
    run_defense,
    run_eval,
    run_report,
    run_train,
    select_attack_population,
)
from evadelab.config import load_run_config, parse_run_config
from evadelab.dataset import Dataset, DatasetSample, write_dataset
from evadelab.detectors import DetectorModel, SvmParameters, TrainingConfig, predict
from evadelab.errors import ConfigError, EmptyPopulationError
from evadelab.features import DrebinFeature, FeatureSet, FeatureVocabulary, encode
from evadelab.metrics import attack_summary
from evadelab.resources import scenarios_dir

F = DrebinFeature.parse

BASE_LINES = [
    "permission::android.permission.SEND_SMS",
    "api_call::android.telephony.SmsManager.sendTextMessage()",
    "hardware::android.hardware.telephony",
]
BENIGN_LINES = [
    "hardware::android.hardware.camera",
    "intent::android.intent.action.MAIN",
]

WIN = F("permission::com.guard.ui.PERM_THEME")
M_FEATURES = [F(f"api_call::com.guard.risk{i}.Hook.run()") for i in range(6)]
B_FEATURES = [F(f"hardware::guard.hardware.b{i}") for i in range(8)]


def guard_dataset(seed: int = 0) -> Dataset:
    """Separable toy corpus where one benign-only feature wins attacks.

    Rows are dense enough that the gap between the classes' equilibrium
    raw scores exceeds the hinge width, which pins the trained bias into
    the band where both classes classify correctly.
    """
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(30):
        picks = rng.choice(6, size=4, replace=False)
        feats = [M_FEATURES[int(j)] for j in np.sort(picks)]
        samples.append(DatasetSample(f"mal-{i:03d}", FeatureSet(feats), "malicious"))
    for i in range(30):
        picks = rng.choice(8, size=4, replace=False)
        feats = [WIN] + [B_FEATURES[int(j)] for j in np.sort(picks)]
        samples.append(DatasetSample(f"ben-{i:03d}", FeatureSet(feats), "benign"))
    return Dataset(samples)


def scripted_dataset() -> Dataset:
    """Every malicious sample equals the scenario scripts' base sample."""
    base = FeatureSet(F(line) for line in BASE_LINES)
    benign = FeatureSet(F(line) for line in BENIGN_LINES)
    samples = [
        DatasetSample(f"m{i}", base, "malicious") for i in range(8)
    ] + [
        DatasetSample(f"b{i}", benign, "benign") for i in range(8)
    ]
    return Dataset(samples)


def write_config(path: Path, dataset_dir: Path, out_dir: Path, **doc_updates) -> Path:
    doc = {
        "dataset": str(dataset_dir),
        "output": str(out_dir),
        "detectors": ["svm"],
        "attack": {"workers": 2},
        "backends": {
            "walker": {"transport": "greedy"},
            "mirror": {"transport": "margin"},
        },
        "manipulator": "walker",
        "analyzer": "mirror",
    }
    doc.update(doc_updates)
    path.write_text(yaml.safe_dump(doc), encoding="utf-8")
    return path


def linear_model(vocab: FeatureVocabulary, weights: dict[DrebinFeature, float],
                 bias: float) -> DetectorModel:
    w = np.zeros(len(vocab), dtype=np.float64)
    for feature, weight in weights.items():
        w[vocab.index_of(feature)] = weight
    return DetectorModel(
        kind="svm",
        input_dim=len(vocab),
        config=TrainingConfig(),
        params=SvmParameters(w, bias, 1.0),
        train_accuracy=1.0,
    )


# ------------------------------------------------------------ configuration


def test_config_reports_every_violation(tmp_path):
    doc = {
        "dataset": str(tmp_path / "nowhere"),
        "split_fraction": 1.5,
        "detectors": ["svm", "forest"],
        "attack": {"max_attempts": 0},
        "backends": {
            "scripted": {"transport": "scripted"},
            "web": {"transport": "http"},
        },
        "manipulator": "ghost",
        "analyzer": "web",
    }
    with pytest.raises(ConfigError) as err:
        parse_run_config(doc, config_dir=tmp_path)
    text = str(err.value)
    for fragment in (
        "dataset: no manifest.txt",
        "output: required",
        "split_fraction",
        "unknown kinds ['forest']",
        "attack.max_attempts",
        "backends.scripted: scripted transport needs a scenario",
        "backends.web: http transport needs an endpoint",
        "manipulator: no backend named 'ghost'",
    ):
        assert fragment in text, f"missing problem: {fragment}"
    assert len(err.value.problems) >= 8


def test_config_resolves_relative_paths(tmp_path):
    data_dir = tmp_path / "data"
    write_dataset(data_dir, guard_dataset())
    cfg = write_config(tmp_path / "run.yaml", Path("data"), Path("runs/a"))
    config = load_run_config(cfg)
    assert config.dataset_dir == str(data_dir)
    assert config.output_dir == str(tmp_path / "runs/a")
    assert config.split_fraction == 0.8
    assert config.attack.workers == 2
    assert config.backends["walker"].transport == "greedy"


def test_config_role_transport_mismatch(tmp_path):
    data_dir = tmp_path / "data"
    write_dataset(data_dir, guard_dataset())
    cfg = write_config(
        tmp_path / "run.yaml", data_dir, tmp_path / "out",
        manipulator="mirror", analyzer="walker",
    )
    with pytest.raises(ConfigError) as err:
        load_run_config(cfg)
    assert "manipulator: backend 'mirror' uses transport 'margin'" in str(err.value)
    assert "analyzer: backend 'walker' uses transport 'greedy'" in str(err.value)


def test_config_scripted_roles_share_scenario(tmp_path):
    data_dir = tmp_path / "data"
    write_dataset(data_dir, guard_dataset())
    first = scenarios_dir() / "evade_at_first.jsonl"
    second = scenarios_dir() / "capped_at_limit.jsonl"
    cfg = write_config(
        tmp_path / "run.yaml", data_dir, tmp_path / "out",
        backends={
            "a": {"transport": "scripted", "scenario": str(first)},
            "b": {"transport": "scripted", "scenario": str(second)},
        },
        manipulator="a", analyzer="b",
    )
    with pytest.raises(ConfigError) as err:
        load_run_config(cfg)
    assert "must share one scenario file" in str(err.value)


def test_config_greedy_needs_svm_detector(tmp_path):
    data_dir = tmp_path / "data"
    write_dataset(data_dir, guard_dataset())
    cfg = write_config(
        tmp_path / "run.yaml", data_dir, tmp_path / "out", detectors=["gbt"]
    )
    with pytest.raises(ConfigError) as err:
        load_run_config(cfg)
    assert "add svm to detectors" in str(err.value)


def test_cli_overrides_rewire_backends(tmp_path):
    data_dir = tmp_path / "data"
    write_dataset(data_dir, guard_dataset())
    cfg = write_config(tmp_path / "run.yaml", data_dir, tmp_path / "out")
    scenario = str(scenarios_dir() / "evade_at_first.jsonl")
    config = load_run_config(
        cfg,
        overrides={
            "out": str(tmp_path / "elsewhere"),
            "seed": 7,
            "max_attempts": 3,
            "mock_scenario": scenario,
        },
    )
    assert config.output_dir == str(tmp_path / "elsewhere")
    assert config.seeds.split == config.seeds.defense == 7
    assert config.attack.max_attempts == 3
    assert config.manipulator == "scripted-manipulator"
    assert config.backends["scripted-analyzer"].scenario == scenario


# ------------------------------------------------------- population selection


def test_population_matches_enumeration_oracle():
    vocab = FeatureVocabulary(M_FEATURES + B_FEATURES)
    model = linear_model(
        vocab, {M_FEATURES[0]: 1.0, M_FEATURES[1]: 1.0, B_FEATURES[0]: -1.0}, -0.5
    )
    samples = [
        DatasetSample("tp-a", FeatureSet([M_FEATURES[0], M_FEATURES[1]]), "malicious"),
        DatasetSample("tp-b", FeatureSet([M_FEATURES[0]]), "malicious"),
        # false negatives: margin at or below zero
        DatasetSample("fn-a", FeatureSet([M_FEATURES[2]]), "malicious"),
        DatasetSample("fn-b", FeatureSet([M_FEATURES[0], B_FEATURES[0]]), "malicious"),
        # benign rows never enter the population, whatever the detector says
        DatasetSample("fp-a", FeatureSet([M_FEATURES[0], M_FEATURES[1]]), "benign"),
        DatasetSample("tn-a", FeatureSet([B_FEATURES[0]]), "benign"),
    ]
    dataset = Dataset(samples)

    expected = []
    for sample in samples:
        if sample.label != "malicious":
            continue
        vector, _ = encode(sample.features, vocab)
        label, _ = predict(model, vector.to_dense())
        if label == 1:
            expected.append(sample.sample_id)

    assert select_attack_population(dataset, vocab, model) == expected == ["tp-a", "tp-b"]


def test_population_empty_raises():
    vocab = FeatureVocabulary(M_FEATURES)
    stubborn = linear_model(vocab, {}, -1.0)  # calls everything benign
    dataset = Dataset(
        [DatasetSample("m", FeatureSet([M_FEATURES[0]]), "malicious")]
    )
    with pytest.raises(EmptyPopulationError):
        select_attack_population(dataset, vocab, stubborn)
    benign_only = Dataset(
        [DatasetSample("b", FeatureSet([B_FEATURES[0]]), "benign")]
    )
    vocab_b = FeatureVocabulary(B_FEATURES)
    with pytest.raises(EmptyPopulationError):
        select_attack_population(benign_only, vocab_b, linear_model(vocab_b, {}, 1.0))


def test_linear_weights_map_and_reject_non_svm():
    vocab = FeatureVocabulary(M_FEATURES[:3])
    model = linear_model(vocab, {M_FEATURES[1]: 2.5}, 0.25)
    weights, bias = linear_feature_weights(model, vocab)
    assert weights[M_FEATURES[1]] == 2.5
    assert weights[M_FEATURES[0]] == 0.0
    assert bias == 0.25
    model.input_dim = 99
    with pytest.raises(ValueError):
        linear_feature_weights(model, vocab)


# ------------------------------------------------------------- full pipeline


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One trained-and-attacked guard run shared by the assertions below."""
    root = tmp_path_factory.mktemp("pipeline")
    data_dir = root / "data"
    write_dataset(data_dir, guard_dataset())
    cfg_path = write_config(root / "run.yaml", data_dir, root / "run")
    config = load_run_config(cfg_path)
    run_train(config)
    results = run_attack_campaign(config)
    return config, RunPaths(Path(config.output_dir)), results, cfg_path


def test_train_writes_artifacts(pipeline):
    config, paths, _results, _cfg = pipeline
    assert paths.manifest.is_file()
    manifest = json.loads(paths.manifest.read_text())
    assert manifest["config"]["dataset_dir"] == config.dataset_dir
    assert "created_utc" in manifest
    assert paths.model_path("svm").is_file()
    vocab_lines = paths.vocab.read_text().splitlines()
    assert F(vocab_lines[0])  # every line parses
    split = json.loads(paths.split.read_text())
    assert len(split["train"]) == 48 and len(split["test"]) == 12
    eval_rows = paths.eval_csv.read_text().splitlines()
    assert eval_rows[0] == "detector,samples,accuracy,tpr,fpr,f1"
    fields = eval_rows[1].split(",")
    assert fields[0] == "svm" and float(fields[2]) == 1.0


def test_attack_results_sorted_and_verified(pipeline):
    _config, paths, results, _cfg = pipeline
    episodes = results["svm"]
    assert len(episodes) == 6  # 30 malicious * 0.2 held out, all true positives
    rows = paths.results_csv.read_text().splitlines()
    assert rows[0] == "detector,pairing,sample_id,outcome,attempts,evaded,success"
    ids = [row.split(",")[2] for row in rows[1:]]
    assert ids == sorted(ids)
    for row in rows[1:]:
        fields = row.split(",")
        assert fields[1] == "walker--mirror"
        assert fields[3] == "evaded" and fields[5] == "true" and fields[6] == "true"
    traces = load_traces(paths, "svm")
    assert [t.sample_id for t in traces] == ids
    assert all(t.evaded for t in traces)


def test_repeat_run_is_byte_identical(pipeline, tmp_path):
    config, paths, _results, _cfg = pipeline
    other_cfg = write_config(
        tmp_path / "again.yaml", Path(config.dataset_dir), tmp_path / "run2"
    )
    other = load_run_config(other_cfg)
    run_train(other)
    run_attack_campaign(other)
    second = RunPaths(Path(other.output_dir))
    assert second.eval_csv.read_bytes() == paths.eval_csv.read_bytes()
    assert second.results_csv.read_bytes() == paths.results_csv.read_bytes()
    for trace_file in sorted(paths.trace_dir("svm").glob("*.trace")):
        twin = second.trace_dir("svm") / trace_file.name
        assert twin.read_bytes() == trace_file.read_bytes()


def test_manifest_guards_config_mismatch(pipeline, tmp_path):
    config, _paths, _results, _cfg = pipeline
    clashing = write_config(
        tmp_path / "clash.yaml",
        Path(config.dataset_dir),
        Path(config.output_dir),
        seeds={"train": 9},
    )
    with pytest.raises(ConfigError) as err:
        run_train(load_run_config(clashing))
    assert "different configuration" in str(err.value)


def test_eval_command_recomputes_same_table(pipeline):
    config, paths, _results, _cfg = pipeline
    before = paths.eval_csv.read_text()
    assert run_eval(config) == before


def test_report_matches_results_table(pipeline):
    config, paths, results, _cfg = pipeline
    table = run_report(config)
    outcomes = [(ep.success, ep.trace.attempts_used) for ep in results["svm"]]
    summary = attack_summary(outcomes, config.attack.max_attempts)
    expected_row = (
        f"svm,walker--mirror,{summary.attacked},{summary.evaded},{summary.evaded},"
        f"1.000000,{summary.asr:.6f},{summary.mean_attempts:.6f}"
    )
    lines = table.splitlines()
    assert lines[0] == (
        "detector,pairing,attacked,evaded,success,evasion_rate,asr,mean_attempts"
    )
    assert lines[1] == expected_row
    assert (paths.report_dir / "summary.csv").read_text() == table
    hist = (paths.report_dir / "histogram.csv").read_text().splitlines()
    assert hist[0] == "detector,pairing,attempts,count"
    assert len(hist) == 1 + config.attack.max_attempts
    counts = {int(r.split(",")[2]): int(r.split(",")[3]) for r in hist[1:]}
    assert sum(counts.values()) == summary.evaded
    for attempts, count in summary.histogram():
        assert counts[attempts] == count


def test_defense_strictly_reduces_asr(pipeline):
    config, paths, _results, _cfg = pipeline
    table = run_defense(config)
    lines = table.splitlines()
    assert lines[0] == "detector,pairing,attacked,asr_before,asr_after,reduction"
    detector, pairing, attacked, before, after, reduction = lines[1].split(",")
    assert detector == "svm" and pairing == "walker--mirror"
    assert int(attacked) == 6
    assert float(after) < float(before)
    assert abs(float(reduction) - (float(before) - float(after))) < 1e-9
    assert (paths.defense_dir / "svm" / "model.retrained").is_file()
    assert (paths.defense_dir / "svm" / "vocab.txt").read_text()
    assert paths.defense_csv.read_text() == table


def test_defense_reattack_mode_runs(tmp_path):
    data_dir = tmp_path / "data"
    write_dataset(data_dir, guard_dataset())
    cfg = write_config(
        tmp_path / "run.yaml", data_dir, tmp_path / "run",
        defense={"per_pairing": 5, "mode": "reattack"},
    )
    config = load_run_config(cfg)
    run_train(config)
    run_attack_campaign(config)
    table = run_defense(config)
    _d, _p, attacked, before, after, _r = table.splitlines()[1].split(",")
    assert int(attacked) == 6
    assert 0.0 <= float(after) <= float(before) == 1.0


# ----------------------------------------------------------------------- CLI


def run_cli(*argv: str) -> int:
    return cli.main(list(argv))


def test_cli_synth_train_eval_roundtrip(tmp_path, capsys):
    data_dir = tmp_path / "synth"
    assert run_cli(
        "synth", "--out", str(data_dir), "--samples", "200", "--universe", "256"
    ) == 0
    assert (data_dir / "manifest.txt").is_file()
    cfg = write_config(tmp_path / "run.yaml", data_dir, tmp_path / "run")
    capsys.readouterr()
    assert run_cli("train", "--config", str(cfg)) == 0
    out = capsys.readouterr().out
    assert out.startswith("detector,samples,accuracy")
    assert run_cli("eval", "--config", str(cfg)) == 0
    assert capsys.readouterr().out == out


def test_cli_scripted_attack_designed_outcome(tmp_path, capsys):
    data_dir = tmp_path / "data"
    write_dataset(data_dir, scripted_dataset())
    cfg = write_config(tmp_path / "run.yaml", data_dir, tmp_path / "run")
    scenario = str(scenarios_dir() / "evade_at_first.jsonl")
    common = ["--config", str(cfg), "--mock-scenario", scenario]
    assert run_cli("train", *common) == 0
    assert run_cli("attack", *common) == 0
    capsys.readouterr()

    paths = RunPaths(tmp_path / "run")
    rows = paths.results_csv.read_text().splitlines()[1:]
    assert len(rows) == 2  # 8 identical malicious samples -> 2 held out
    for row in rows:
        _d, pairing, _sid, outcome, attempts, evaded, success = row.split(",")
        assert pairing == "scripted-manipulator--scripted-analyzer"
        # the script wins on its first proposal; the added permission is
        # out-of-vocabulary here, so the detector itself never flips
        assert outcome == "evaded" and attempts == "1"
        assert evaded == "true" and success == "false"

    assert run_cli("report", *common) == 0
    summary = capsys.readouterr().out.splitlines()
    assert summary[1] == (
        "svm,scripted-manipulator--scripted-analyzer,2,2,0,1.000000,0.000000,"
    )


def test_cli_max_attempts_override_caps_episodes(tmp_path):
    data_dir = tmp_path / "data"
    write_dataset(data_dir, scripted_dataset())
    cfg = write_config(tmp_path / "run.yaml", data_dir, tmp_path / "run")
    scenario = str(scenarios_dir() / "capped_at_limit.jsonl")
    common = ["--config", str(cfg), "--mock-scenario", scenario, "--max-attempts", "3"]
    assert run_cli("train", *common) == 0
    assert run_cli("attack", *common) == 0
    rows = RunPaths(tmp_path / "run").results_csv.read_text().splitlines()[1:]
    for row in rows:
        fields = row.split(",")
        assert fields[3] == "capped" and fields[4] == "3"


def test_cli_report_on_empty_run_fails_cleanly(tmp_path, capsys):
    data_dir = tmp_path / "data"
    write_dataset(data_dir, guard_dataset())
    cfg = write_config(tmp_path / "run.yaml", data_dir, tmp_path / "run")
    assert run_cli("report", "--config", str(cfg)) == 1
    assert "run attack first" in capsys.readouterr().err
    assert not (tmp_path / "run" / "report").exists()


def test_cli_config_problems_exit_2(tmp_path, capsys):
    data_dir = tmp_path / "data"
    write_dataset(data_dir, guard_dataset())
    cfg = write_config(
        tmp_path / "bad.yaml", data_dir, tmp_path / "run", split_fraction=2.0
    )
    assert run_cli("train", "--config", str(cfg)) == 2
    assert "split_fraction" in capsys.readouterr().err
    assert run_cli("train", "--config", str(tmp_path / "missing.yaml")) == 2
    assert "does not exist" in capsys.readouterr().err


def test_cli_attack_requires_train_first(tmp_path, capsys):
    data_dir = tmp_path / "data"
    write_dataset(data_dir, guard_dataset())
    cfg = write_config(tmp_path / "run.yaml", data_dir, tmp_path / "fresh")
    assert run_cli("attack", "--config", str(cfg)) == 1
    assert "run train first" in capsys.readouterr().err
