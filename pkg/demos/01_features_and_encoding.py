"""Feature files, vocabularies, and binary encodings.

A sample is a text file with one `category::value` line per static
property observed in an app.  This script walks the grammar, builds a
vocabulary from a handful of samples, and shows how presence vectors
and the sparse random projection are derived from it.
"""

import numpy as np

from evadelab.features import (
    CATEGORY_TOKENS,
    DrebinFeature,
    FeatureSet,
    FeatureVocabulary,
    build_vocabulary,
    encode,
)
from evadelab.projection import ProjectionSpec, project

print("recognized categories:")
print(" ", ", ".join(sorted(CATEGORY_TOKENS)))

# Parsing is strict: unknown categories and malformed lines are rejected
# instead of silently passing garbage downstream.
sms_sender = FeatureSet(
    DrebinFeature.parse(line)
    for line in [
        "permission::android.permission.SEND_SMS",
        "api_call::android.telephony.SmsManager.sendTextMessage()",
        "hardware::android.hardware.telephony",
        "intent::android.intent.action.BOOT_COMPLETED",
    ]
)
photo_app = FeatureSet(
    DrebinFeature.parse(line)
    for line in [
        "permission::android.permission.CAMERA",
        "hardware::android.hardware.camera",
        "intent::android.intent.action.MAIN",
    ]
)

for bad in ("badcat::whatever", "no separator here"):
    try:
        DrebinFeature.parse(bad)
    except ValueError as exc:
        print(f"rejected {bad!r}: {exc}")

# A vocabulary fixes the feature-to-column mapping.  Order is the sorted
# serialized form, so the same samples always produce the same columns.
vocab = build_vocabulary([sms_sender, photo_app])
print(f"\nvocabulary of {len(vocab)} features:")
for i in range(len(vocab)):
    print(f"  [{i}] {vocab.feature_at(i).serialize()}")

x, dropped = encode(sms_sender, vocab)
print("\nsms sender encodes to", x.to_dense().astype(int), f"(dropped {dropped})")

# Features outside the vocabulary simply drop out of the encoding;
# deployed detectors only see the columns they were trained with.
stranger = sms_sender.union([DrebinFeature.parse("url::https://tracker.example.net/p")])
xs, dropped = encode(stranger, vocab)
print("with an out-of-vocabulary url:", xs.to_dense().astype(int), f"(dropped {dropped})")

# The neural detector does not consume the raw one-hot vector.  A seeded
# sparse random projection compresses it first; the spec is tiny (seed
# and shape), yet the projected geometry is reproducible everywhere.
spec = ProjectionSpec.create(seed=7, input_dim=len(vocab), output_dim=4)
z = project(x, spec)
print("\nprojected to", len(z), "dims ->", np.round(z.to_dense(), 3))
print("same spec, same output:", z == project(x, spec))

vocab2 = FeatureVocabulary.from_lines(vocab.serialize_lines())
print("vocabulary round-trips through text:", vocab2.serialize_lines() == vocab.serialize_lines())
