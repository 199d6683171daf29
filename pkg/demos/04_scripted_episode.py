"""Replay one scripted attack episode and read its trace.

The attack loop talks to two agents: a manipulator that proposes one
feature addition per round and an analyzer that renders a verdict on
the modified sample.  Scripted scenario files stand in for live agents,
so the whole protocol runs offline with byte-reproducible traces.  This
one shows the replacement path: the second proposal swaps the first
addition for a better one and the analyzer flips to Benign.
"""

from evadelab.agents import BackendDescriptor
from evadelab.attack import AttackConfig, run_attack, serialize_trace
from evadelab.backends import Backend, SimulatedClock
from evadelab.features import DrebinFeature, FeatureSet
from evadelab.mocks import ScriptedScenario, ScriptedTransport
from evadelab.rag import HashingEmbedder, build_index, chunk_corpus, load_corpus_dir
from evadelab.resources import fixture_docs_dir, scenarios_dir

base = FeatureSet(
    DrebinFeature.parse(line)
    for line in [
        "permission::android.permission.SEND_SMS",
        "api_call::android.telephony.SmsManager.sendTextMessage()",
        "hardware::android.hardware.telephony",
    ]
)

index = build_index(
    chunk_corpus(load_corpus_dir(fixture_docs_dir())), HashingEmbedder(seed=0)
)

# Both roles replay from one shared script; a shared cursor means any
# out-of-order call fails loudly instead of consuming the wrong line.
scenario = ScriptedScenario.load(scenarios_dir() / "replace_then_evade.jsonl")
clock = SimulatedClock()
descriptor = BackendDescriptor(name="demo", endpoint="mock:scripted", max_retries=0)
manipulator = Backend(descriptor, ScriptedTransport(scenario, "manipulator"), clock=clock)
analyzer = Backend(descriptor, ScriptedTransport(scenario, "analyzer"), clock=clock)

trace = run_attack(
    "demo-sample",
    base,
    manipulator=manipulator,
    analyzer=analyzer,
    index=index,
    config=AttackConfig(max_attempts=10),
)

print(f"outcome: {trace.outcome}, attempts used: {trace.attempts_used}")
print(f"evaded: {trace.evaded}")
print("final additions:", [f.serialize() for f in sorted(
    trace.perturbation(), key=lambda f: f.serialize())])

print("\nround by round:")
for record in trace.records:
    change = record.delta.kind
    if record.delta.added is not None:
        change += f" {record.delta.added.serialize()}"
    if record.delta.removed is not None:
        change += f" (dropping {record.delta.removed.serialize()})"
    print(f"  attempt {record.attempt}: {record.kind} -> {change} -> {record.verdict}")

# The serialized trace is the persistent artifact a campaign writes for
# every episode; identical inputs serialize to identical bytes.
print("\nserialized trace:")
print(serialize_trace(trace))
