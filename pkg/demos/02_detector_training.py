"""Train the three detector families on a synthetic corpus.

The synthetic generator plants separating feature blocks with a little
label noise, which gives every detector something learnable without
shipping real malware.  The linear model trains on raw presence
vectors, the boosted trees likewise, and the feed-forward net trains on
a 256-dimensional sparse random projection of them.
"""

import numpy as np

from evadelab.dataset import encode_dataset, split_dataset
from evadelab.defense import encode_with_projection
from evadelab.detectors import TrainingConfig, predict_batch, train
from evadelab.features import build_vocabulary
from evadelab.metrics import confusion, rates
from evadelab.projection import ProjectionSpec
from evadelab.synthetic import generate_synthetic_dataset

dataset = generate_synthetic_dataset(n_samples=2000, universe_size=2048, seed=0)
train_ids, test_ids = split_dataset(dataset, fraction=0.8, seed=0)
train_set = dataset.subset(train_ids)
test_set = dataset.subset(test_ids)
print(f"{len(train_ids)} training samples, {len(test_ids)} held out")

# The vocabulary comes from the training split only.  Anything the test
# samples carry beyond it drops out at encoding time, exactly as it
# would for a deployed model meeting a new app.
vocab = build_vocabulary(train_set.feature_sets())
print(f"vocabulary from training split: {len(vocab)} features")

x, y, _ = encode_dataset(train_set, vocab)
xt, yt, _ = encode_dataset(test_set, vocab)
config = TrainingConfig(seed=0)

print(f"\n{'detector':<10} {'accuracy':>8} {'tpr':>8} {'fpr':>8} {'f1':>8}")
for kind in ("svm", "gbt", "nn"):
    if kind == "nn":
        spec = ProjectionSpec.create(seed=0, input_dim=len(vocab), output_dim=256)
        model = train(
            kind,
            encode_with_projection(train_set.feature_sets(), vocab, spec),
            y,
            config,
            projection=spec,
        )
        labels, scores = predict_batch(
            model, encode_with_projection(test_set.feature_sets(), vocab, spec)
        )
    else:
        model = train(kind, x, y, config)
        labels, scores = predict_batch(model, xt)
    r = rates(confusion(labels.tolist(), yt.tolist()))
    print(f"{kind:<10} {r.accuracy:>8.4f} {r.tpr:>8.4f} {r.fpr:>8.4f} {r.f1:>8.4f}")

# Scores are signed margins for the svm and malicious-class
# probabilities for the trees and the net; each kind thresholds its own.
print("\nfirst five nn test scores:", np.round(scores[:5], 4))
print("first five nn test labels:", labels[:5], "truth:", yt[:5])
