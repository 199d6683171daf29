"""End-to-end campaign: train, attack, report, defend.

Everything below also runs from the command line (`evadelab synth`,
`train`, `attack`, `report`, `defend` against a config file); this
script drives the same functions through the library API against the
deterministic greedy/margin agent pair, so it finishes in seconds and
produces identical artifacts on every run.
"""

import tempfile
from pathlib import Path

import yaml

from evadelab.campaign import (
    RunPaths,
    run_attack_campaign,
    run_defense,
    run_report,
    run_train,
)
from evadelab.config import load_run_config
from evadelab.dataset import write_dataset
from evadelab.synthetic import generate_synthetic_dataset

workdir = Path(tempfile.mkdtemp(prefix="evadelab-demo-"))
print(f"working under {workdir}")

write_dataset(workdir / "data", generate_synthetic_dataset(seed=0))

# The run config names two mock backends: a greedy manipulator that
# walks the trained svm's weight ranking, and a margin analyzer that
# mirrors the detector's decision boundary.  Swapping in live agents is
# a config change (transport http plus an endpoint), not a code change.
config_path = workdir / "run.yaml"
config_path.write_text(
    yaml.safe_dump(
        {
            "dataset": str(workdir / "data"),
            "output": str(workdir / "run"),
            "detectors": ["svm"],
            "attack": {"workers": 4},
            "backends": {
                "walker": {"transport": "greedy"},
                "mirror": {"transport": "margin"},
            },
            "manipulator": "walker",
            "analyzer": "mirror",
        }
    ),
    encoding="utf-8",
)
config = load_run_config(config_path)
paths = RunPaths(Path(config.output_dir))

run_train(config)
print("\nheld-out detector quality:")
print(paths.eval_csv.read_text(encoding="utf-8"))

# Attack every test-split sample the detector correctly flags as
# malicious.  Episodes run in a worker pool; traces and the results
# table are still written in a deterministic order.
episodes = run_attack_campaign(config)["svm"]
verified = sum(ep.success for ep in episodes)
print(f"attacked {len(episodes)} true positives, {verified} verified evasions")

run_report(config)
print("\ncampaign summary:")
print((paths.report_dir / "summary.csv").read_text(encoding="utf-8"))
print("attempts histogram (verified successes):")
print((paths.report_dir / "histogram.csv").read_text(encoding="utf-8"))

# Defense: fold sampled adversarial feature sets back into training as
# malicious examples, rebuild the vocabulary so the added features stop
# being invisible, retrain, and replay the recorded evasions.
print("retraining with adversarial augmentation...")
run_defense(config)
print(paths.defense_csv.read_text(encoding="utf-8"))

print(f"artifacts kept under {workdir}")
