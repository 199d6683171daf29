"""Command-line entry points for the run pipeline.

Exit codes: 0 on success, 2 for configuration problems (every violation
is listed), 1 for runtime failures.  Failed commands write no partial
result files.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from .campaign import (
    RunPaths,
    run_attack_campaign,
    run_defense,
    run_eval,
    run_report,
    run_train,
)
from .config import RunConfig, load_run_config
from .dataset import write_dataset
from .errors import ConfigError, EvadeLabError
from .synthetic import generate_synthetic_dataset


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="run configuration YAML")
    parser.add_argument("--out", help="output directory (overrides the config)")
    parser.add_argument(
        "--seed", type=int, help="override every seed (split/train/attack/defense)"
    )
    parser.add_argument(
        "--detector", choices=("svm", "gbt", "nn"), help="restrict to one detector"
    )
    parser.add_argument(
        "--backend-manipulator", help="backend name to use for the manipulator role"
    )
    parser.add_argument(
        "--backend-analyzer", help="backend name to use for the analyzer role"
    )
    parser.add_argument(
        "--mock-scenario",
        help="scripted scenario file; wires both agent roles to it",
    )
    parser.add_argument(
        "--max-attempts", type=int, help="override the per-episode attempt cap"
    )


def _config_from(args: argparse.Namespace) -> RunConfig:
    overrides = {
        "out": args.out,
        "seed": args.seed,
        "detector": args.detector,
        "manipulator": args.backend_manipulator,
        "analyzer": args.backend_analyzer,
        "mock_scenario": args.mock_scenario,
        "max_attempts": args.max_attempts,
    }
    return load_run_config(args.config, overrides)


def cmd_train(args: argparse.Namespace) -> int:
    config = _config_from(args)
    run_train(config)
    table = RunPaths(Path(config.output_dir)).eval_csv.read_text(encoding="utf-8")
    print(table, end="")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    print(run_eval(_config_from(args)), end="")
    return 0


def cmd_attack(args: argparse.Namespace) -> int:
    config = _config_from(args)
    results = run_attack_campaign(config)
    for kind, episodes in results.items():
        evaded = sum(1 for ep in episodes if ep.trace.evaded)
        verified = sum(1 for ep in episodes if ep.success)
        print(
            f"{kind}: attacked={len(episodes)} evaded={evaded} verified={verified}"
        )
    return 0


def cmd_defend(args: argparse.Namespace) -> int:
    print(run_defense(_config_from(args)), end="")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    print(run_report(_config_from(args)), end="")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    dataset = generate_synthetic_dataset(
        n_samples=args.samples,
        universe_size=args.universe,
        seed=args.seed,
        noise_rate=args.noise,
    )
    manifest = write_dataset(Path(args.out), dataset)
    print(f"wrote {len(dataset)} samples under {manifest.parent}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evadelab",
        description="Train detectors, run evasion attacks, and measure defenses.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, handler, help_text in (
        ("train", cmd_train, "split the dataset, fit detectors, write eval metrics"),
        ("eval", cmd_eval, "recompute held-out metrics from saved models"),
        ("attack", cmd_attack, "run attack episodes against trained detectors"),
        ("defend", cmd_defend, "augment, retrain, and compare attack success"),
        ("report", cmd_report, "aggregate results into plot-ready CSV tables"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_run_options(p)
        p.set_defaults(handler=handler)

    synth = sub.add_parser("synth", help="generate the bundled-style synthetic dataset")
    synth.add_argument("--out", required=True, help="dataset directory to create")
    synth.add_argument("--samples", type=int, default=2000)
    synth.add_argument("--universe", type=int, default=2048)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--noise", type=float, default=0.02)
    synth.set_defaults(handler=cmd_synth)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except (EvadeLabError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
