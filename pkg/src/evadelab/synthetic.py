"""Seeded synthetic malware/benign dataset generator.

Desk-scale stand-in for a real APK corpus: a fixed feature universe with
a malware-indicative block, a benign-indicative block (with a small core
that carries most of the benign signal), and a large background block
drawn by both classes.  A small fraction of labels is flipped after
generation, so perfect accuracy is unattainable by design.

Block membership is recoverable from the value prefixes (``riskops``,
``benignkit``, ``bg``), which keeps downstream analysis honest: nothing
else in the pipeline is told which features separate the classes.
"""

from __future__ import annotations

import numpy as np

from .dataset import Dataset, DatasetSample
from .features import DrebinFeature, FeatureSet

MAL_BLOCK = 64
BEN_BLOCK = 64
BEN_CORE = 8  # first features of the benign block; most benign mass lives here

_MAL_SHAPES = (
    "api_call::com.synth.riskops.Unit{i:02d}.dispatch()",
    "permission::com.synth.riskops.PERM_RISK_{i:02d}",
    "url::https://c{i:02d}.synth-risk.example/push",
    "restricted_api::com.synth.riskops.Gate{i:02d}.open()",
)

_BEN_SHAPES = (
    "api_call::com.synth.benignkit.Widget{i:02d}.render()",
    "permission::com.synth.benignkit.PERM_SAFE_{i:02d}",
    "intent::com.synth.benignkit.action.VIEW_{i:02d}",
    "hardware::synth.hardware.ben_{i:02d}",
)

_BG_SHAPES = (
    "hardware::synth.hardware.bg_{i:04d}",
    "permission::com.synth.bg.PERM_{i:04d}",
    "component::com.synth.bg.Component{i:04d}",
    "intent::com.synth.bg.action.EVT_{i:04d}",
    "restricted_api::com.synth.bg.Api{i:04d}.call()",
    "used_permission::com.synth.bg.USED_{i:04d}",
    "api_call::com.synth.bg.pkg{i:04d}.Util.get()",
    "url::https://bg{i:04d}.synth.example/data",
)


def _block(shapes: tuple[str, ...], count: int) -> list[DrebinFeature]:
    return [
        DrebinFeature.parse(shapes[i % len(shapes)].format(i=i)) for i in range(count)
    ]


def synthetic_universe(universe_size: int = 2048) -> dict[str, list[DrebinFeature]]:
    """The full feature universe, partitioned into its generating blocks."""
    if universe_size <= MAL_BLOCK + BEN_BLOCK:
        raise ValueError(
            f"universe must exceed {MAL_BLOCK + BEN_BLOCK} indicator features"
        )
    background = universe_size - MAL_BLOCK - BEN_BLOCK
    return {
        "malicious": _block(_MAL_SHAPES, MAL_BLOCK),
        "benign": _block(_BEN_SHAPES, BEN_BLOCK),
        "background": _block(_BG_SHAPES, background),
    }


def generate_synthetic_dataset(
    n_samples: int = 2000,
    universe_size: int = 2048,
    seed: int = 0,
    noise_rate: float = 0.02,
) -> Dataset:
    """Deterministic dataset of ``n_samples`` with every universe feature used.

    Half malicious, half benign before label noise.  Malicious samples
    draw 8-12 malware-block features; benign samples draw exactly 4 of
    the benign core plus a few tail features, which concentrates the
    benign evidence into a few heavy features (this is what makes small
    feature-addition attacks plausible rather than hopeless).
    """
    if n_samples < 4:
        raise ValueError("need at least 4 samples")
    if not 0.0 <= noise_rate < 0.5:
        raise ValueError("noise rate must lie in [0, 0.5)")
    blocks = synthetic_universe(universe_size)
    mal = blocks["malicious"]
    ben = blocks["benign"]
    ben_core, ben_tail = ben[:BEN_CORE], ben[BEN_CORE:]
    bg = blocks["background"]

    rng = np.random.default_rng(seed)
    n_mal = n_samples // 2
    rows: list[tuple[str, list[DrebinFeature], int]] = []

    def draw(pool: list[DrebinFeature], count: int) -> list[DrebinFeature]:
        picks = rng.choice(len(pool), size=min(count, len(pool)), replace=False)
        return [pool[int(i)] for i in np.sort(picks)]

    for i in range(n_mal):
        feats = draw(mal, int(rng.integers(8, 13)))
        if rng.random() < 0.15:
            feats += draw(ben_tail, 1)
        feats += draw(bg, int(rng.integers(10, 17)))
        rows.append((f"mal-{i:04d}", feats, 1))
    for i in range(n_samples - n_mal):
        feats = draw(ben_core, 4)
        feats += draw(ben_tail, int(rng.integers(3, 6)))
        feats += draw(bg, int(rng.integers(10, 17)))
        rows.append((f"ben-{i:04d}", feats, 0))

    # every universe feature must appear somewhere, or the built
    # vocabulary shrinks below the advertised size
    used = {f for _, feats, _ in rows for f in feats}
    for block, pool in (("malicious", mal), ("benign", ben), ("background", bg)):
        missing = [f for f in pool if f not in used]
        for f in missing:
            if block == "malicious":
                row = int(rng.integers(0, n_mal))
            elif block == "benign":
                row = n_mal + int(rng.integers(0, n_samples - n_mal))
            else:
                row = int(rng.integers(0, n_samples))
            rows[row][1].append(f)

    flips = int(round(noise_rate * n_samples))
    flipped = set(rng.choice(n_samples, size=flips, replace=False).tolist())

    samples = []
    for row, (sample_id, feats, label) in enumerate(rows):
        if row in flipped:
            label = 1 - label
        samples.append(
            DatasetSample(
                sample_id,
                FeatureSet(feats),
                "malicious" if label == 1 else "benign",
            )
        )
    return Dataset(samples)
