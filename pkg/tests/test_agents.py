import threading

import httpx
import pytest

from evadelab.agents import (
    AnalyzerVerdict,
    BackendDescriptor,
    PromptKind,
    build_prompt,
    count_tokens,
    infer_prompt_kind,
    parse_analyzer_output,
    parse_manipulator_output,
)
from evadelab.backends import (
    Backend,
    HttpChatTransport,
    SimulatedClock,
    TokenBucket,
    TransientBackendError,
)
from evadelab.errors import (
    BackendUnavailableError,
    PromptTooLargeError,
    UnparseableResponseError,
)
from evadelab.features import DrebinFeature
from evadelab.mocks import (
    EchoTransport,
    FailingTransport,
    GreedyAdderTransport,
    MarginAnalyzerTransport,
    ScenarioMismatchError,
    ScriptedScenario,
    ScriptedTransport,
    build_feature_set,
)

BASE = build_feature_set(
    [
        "permission::android.permission.SEND_SMS",
        "api_call::android.telephony.SmsManager.sendTextMessage()",
    ]
)

VIBRATE = DrebinFeature.parse("permission::android.permission.VIBRATE")


def descriptor(**overrides):
    defaults = dict(name="test", endpoint="scripted:", max_retries=2,
                    backoff_base_seconds=0.5)
    defaults.update(overrides)
    return BackendDescriptor(**defaults)


# ---------------------------------------------------------------------------
# prompt building


def test_propose_prompt_contains_features_and_instruction():
    prompt = build_prompt(PromptKind.PROPOSE, "", BASE)
    assert prompt.startswith("You are an Android malware manipulator.")
    assert "Please add only one Drebin feature" in prompt
    assert "permission::android.permission.SEND_SMS" in prompt
    assert "api_call::android.telephony.SmsManager.sendTextMessage()" in prompt
    assert "{CONTEXT}" not in prompt and "{QUERY}" not in prompt


def test_analyze_prompt_verbatim_sections():
    prompt = build_prompt(PromptKind.ANALYZE, "some context", BASE)
    assert prompt.startswith("You are an Android malware analyzer.")
    assert '"Malicious" with the explanation' in prompt
    assert '"Benign" with the explanation' in prompt
    assert "context: some context" in prompt


def test_revise_prompt_requires_slots():
    with pytest.raises(ValueError):
        build_prompt(PromptKind.REVISE, "", BASE, explanation="reason")
    with pytest.raises(ValueError):
        build_prompt(PromptKind.REVISE, "", BASE, last_added=VIBRATE)
    prompt = build_prompt(
        PromptKind.REVISE, "", BASE, explanation="looks suspicious",
        last_added=VIBRATE,
    )
    assert "remove the last added feature permission::android.permission.VIBRATE" in prompt
    assert "features:\n" in prompt
    assert "explanation:\nlooks suspicious" in prompt
    assert "{LAST_ADDED_FEATURE}" not in prompt


def test_prompt_rendering_is_deterministic():
    a = build_prompt(PromptKind.PROPOSE, "ctx", BASE)
    b = build_prompt(PromptKind.PROPOSE, "ctx", BASE)
    assert a.encode() == b.encode()


def test_analyze_prompt_never_marks_perturbations():
    adversarial = BASE.union(build_feature_set(["permission::android.permission.VIBRATE"]))
    prompt = build_prompt(PromptKind.ANALYZE, "", adversarial)
    lowered = prompt.lower()
    for marker in ("added", "perturb", "manipulat", "modified", "new feature"):
        assert marker not in lowered
    with pytest.raises(ValueError):
        build_prompt(PromptKind.ANALYZE, "", adversarial, last_added=VIBRATE)


def test_infer_prompt_kind_round_trip():
    propose = build_prompt(PromptKind.PROPOSE, "", BASE)
    analyze = build_prompt(PromptKind.ANALYZE, "", BASE)
    revise = build_prompt(PromptKind.REVISE, "", BASE, explanation="e",
                          last_added=VIBRATE)
    assert infer_prompt_kind(propose) is PromptKind.PROPOSE
    assert infer_prompt_kind(analyze) is PromptKind.ANALYZE
    assert infer_prompt_kind(revise) is PromptKind.REVISE
    with pytest.raises(ValueError):
        infer_prompt_kind("hello there")


# ---------------------------------------------------------------------------
# parsing


def test_parse_manipulator_tolerates_prose_and_bullets():
    text = (
        "Sure, here is the modified feature set:\n"
        "- permission::android.permission.SEND_SMS\n"
        "* api_call::android.telephony.SmsManager.sendTextMessage()\n"
        "1. permission::android.permission.VIBRATE,\n"
        "These features should evade detection.\n"
    )
    out = parse_manipulator_output(text, BASE)
    assert len(out.features) == 3
    assert VIBRATE in out.features
    assert out.raw_text == text


def test_parse_manipulator_code_fence_and_duplicates():
    text = (
        "```\n"
        "permission::android.permission.SEND_SMS\n"
        "permission::android.permission.SEND_SMS\n"
        "hardware::android.hardware.telephony\n"
        "```\n"
    )
    out = parse_manipulator_output(text, BASE)
    assert [f.serialize() for f in out.features] == [
        "permission::android.permission.SEND_SMS",
        "hardware::android.hardware.telephony",
    ]


def test_parse_manipulator_rejects_featureless_text():
    with pytest.raises(UnparseableResponseError):
        parse_manipulator_output("I cannot help with that request.", BASE)


def test_parse_analyzer_verdicts():
    v = parse_analyzer_output("Malicious. The SMS-send API combined with boot "
                              "persistence indicates screwy behavior.")
    assert v.label == "Malicious" and not v.is_benign
    assert v.explanation.startswith(". The SMS-send API") or "SMS-send" in v.explanation

    v = parse_analyzer_output("benign - typical messaging app")
    assert v.label == "Benign" and v.is_benign

    with pytest.raises(UnparseableResponseError):
        parse_analyzer_output("The jury is still out on this one.")


def test_parse_analyzer_earliest_token_wins():
    v = parse_analyzer_output("Benign overall, though some calls look malicious.")
    assert v.label == "Benign"
    v = parse_analyzer_output("maliciousness aside, Malicious is the verdict")
    # "maliciousness" is not standalone; the bare token decides
    assert v.label == "Malicious"


def test_parse_analyzer_bare_token_keeps_nonempty_explanation():
    v = parse_analyzer_output("Malicious")
    assert v.label == "Malicious"
    assert v.explanation == "Malicious"


def test_echo_round_trip_recovers_features():
    backend = Backend(descriptor(), EchoTransport())
    prompt = build_prompt(PromptKind.PROPOSE, "", BASE)
    echoed = backend.invoke(prompt)
    out = parse_manipulator_output(echoed, BASE)
    assert out.features == BASE


# ---------------------------------------------------------------------------
# backend policy


def test_temperature_must_be_zero():
    with pytest.raises(ValueError):
        BackendDescriptor(name="x", endpoint="y", temperature=0.7)


def test_token_bucket_schedule_matches_oracle():
    clock = SimulatedClock()
    bucket = TokenBucket(10, clock)  # 10 tokens/minute
    assert bucket.acquire(20) == 0.0  # admitted immediately, overdrafts
    assert clock.now() == 0.0
    waited = bucket.acquire(20)  # must wait for 20 tokens at 1/6 per second
    assert waited >= 60.0
    assert waited == pytest.approx(120.0)
    assert clock.now() == pytest.approx(120.0)


def test_rate_limited_backend_delays_second_call():
    clock = SimulatedClock()
    calls = []

    class RecordingTransport:
        def complete(self, prompt):
            calls.append(clock.now())
            return "Benign enough"

    backend = Backend(descriptor(token_rate_limit=10), RecordingTransport(),
                      clock=clock)
    prompt = " ".join(["tok"] * 20)
    backend.invoke(prompt)
    backend.invoke(prompt)
    assert calls[0] == 0.0
    assert calls[1] >= 60.0


def test_retries_then_backend_unavailable():
    clock = SimulatedClock()
    transport = FailingTransport()
    backend = Backend(descriptor(max_retries=2), transport, clock=clock)
    with pytest.raises(BackendUnavailableError):
        backend.invoke("hello")
    assert transport.calls == 3
    assert clock.now() == pytest.approx(0.5 + 1.0)


def test_prompt_too_large():
    backend = Backend(descriptor(max_prompt_tokens=5), EchoTransport())
    with pytest.raises(PromptTooLargeError):
        backend.invoke("one two three four five six")


def test_count_tokens_is_whitespace_tokens():
    assert count_tokens("a b  c\nd") == 4


# ---------------------------------------------------------------------------
# http transport


def chat_response(content):
    return {"choices": [{"message": {"role": "assistant", "content": content}}]}


def test_http_transport_success_and_auth(monkeypatch):
    monkeypatch.setenv("TEST_API_KEY", "sk-123")
    seen = {}

    def handler(request: httpx.Request) -> httpx.Response:
        seen["auth"] = request.headers.get("authorization")
        seen["body"] = request.read()
        return httpx.Response(200, json=chat_response("Benign. fine"))

    desc = descriptor(endpoint="https://example.test/v1/chat",
                      credential_env="TEST_API_KEY", model="demo-model")
    transport = HttpChatTransport(
        desc, client=httpx.Client(transport=httpx.MockTransport(handler))
    )
    assert transport.complete("hello") == "Benign. fine"
    assert seen["auth"] == "Bearer sk-123"
    assert b'"temperature": 0.0' in seen["body"] or b'"temperature":0.0' in seen["body"]
    assert b"demo-model" in seen["body"]


def test_http_transport_missing_credential():
    desc = descriptor(endpoint="https://example.test/v1/chat",
                      credential_env="UNSET_KEY_VAR_12345")
    transport = HttpChatTransport(
        desc, client=httpx.Client(transport=httpx.MockTransport(
            lambda request: httpx.Response(200, json=chat_response("x"))
        ))
    )
    with pytest.raises(BackendUnavailableError):
        transport.complete("hello")


def test_http_transport_transient_then_success():
    state = {"calls": 0}

    def handler(request):
        state["calls"] += 1
        if state["calls"] < 3:
            return httpx.Response(500)
        return httpx.Response(200, json=chat_response("Malicious. nope"))

    desc = descriptor(endpoint="https://example.test/v1/chat")
    transport = HttpChatTransport(
        desc, client=httpx.Client(transport=httpx.MockTransport(handler))
    )
    backend = Backend(desc, transport, clock=SimulatedClock())
    assert backend.invoke("hi") == "Malicious. nope"
    assert state["calls"] == 3


def test_http_transport_fatal_status():
    desc = descriptor(endpoint="https://example.test/v1/chat")
    transport = HttpChatTransport(
        desc, client=httpx.Client(transport=httpx.MockTransport(
            lambda request: httpx.Response(400, json={"error": "bad"})
        ))
    )
    with pytest.raises(BackendUnavailableError):
        transport.complete("hello")


def test_http_transport_429_is_transient():
    desc = descriptor(endpoint="https://example.test/v1/chat")
    transport = HttpChatTransport(
        desc, client=httpx.Client(transport=httpx.MockTransport(
            lambda request: httpx.Response(429)
        ))
    )
    with pytest.raises(TransientBackendError):
        transport.complete("hello")


# ---------------------------------------------------------------------------
# scripted scenario


def test_scripted_responses_in_order():
    scenario = ScriptedScenario.from_responses(["A", "B"])
    transport = ScriptedTransport(scenario, role="manipulator")
    prompt = build_prompt(PromptKind.PROPOSE, "", BASE)
    assert transport.complete(prompt) == "A"
    assert transport.complete(prompt) == "B"
    with pytest.raises(ScenarioMismatchError):
        transport.complete(prompt)


def test_scripted_kind_and_role_checks():
    scenario = ScriptedScenario.from_jsonl(
        '{"expect": "analyze", "response": "Benign. ok"}\n'
    )
    manipulator = ScriptedTransport(scenario, role="manipulator")
    analyzer = ScriptedTransport(scenario, role="analyzer")
    propose = build_prompt(PromptKind.PROPOSE, "", BASE)
    analyze = build_prompt(PromptKind.ANALYZE, "", BASE)
    with pytest.raises(ScenarioMismatchError):
        manipulator.complete(propose)  # wrong expected kind in script
    assert analyzer.complete(analyze) == "Benign. ok"
    assert scenario.exhausted


def test_scenario_jsonl_failure_modes():
    scenario = ScriptedScenario.from_jsonl(
        '{"expect": "propose", "fail": "transient"}\n'
        '{"expect": "propose", "fail": "fatal"}\n'
    )
    transport = ScriptedTransport(scenario, role="manipulator")
    propose = build_prompt(PromptKind.PROPOSE, "", BASE)
    with pytest.raises(TransientBackendError):
        transport.complete(propose)
    with pytest.raises(BackendUnavailableError):
        transport.complete(propose)
    with pytest.raises(ValueError):
        ScriptedScenario.from_jsonl("")


# ---------------------------------------------------------------------------
# campaign mocks


def weights_fixture():
    return {
        DrebinFeature.parse("permission::android.permission.VIBRATE"): -2.0,
        DrebinFeature.parse("hardware::android.hardware.camera"): -1.0,
        DrebinFeature.parse("permission::android.permission.SEND_SMS"): 3.0,
    }


def test_greedy_adder_appends_strongest_benign_feature():
    transport = GreedyAdderTransport(weights_fixture())
    prompt = build_prompt(PromptKind.PROPOSE, "", BASE)
    response = transport.complete(prompt)
    lines = response.splitlines()
    assert lines[:2] == [f.serialize() for f in BASE]
    assert lines[2] == "permission::android.permission.VIBRATE"

    # next call with VIBRATE present picks the next candidate
    bigger = BASE.union(build_feature_set(["permission::android.permission.VIBRATE"]))
    response = transport.complete(build_prompt(PromptKind.PROPOSE, "", bigger))
    assert response.splitlines()[-1] == "hardware::android.hardware.camera"


def test_greedy_adder_reads_revise_prompts():
    transport = GreedyAdderTransport(weights_fixture())
    prompt = build_prompt(
        PromptKind.REVISE, "", BASE,
        explanation="uses api_call::fake.Thing.method() markers",
        last_added=VIBRATE,
    )
    response = transport.complete(prompt)
    lines = response.splitlines()
    # explanation text must not leak into the parsed feature list
    assert all("fake.Thing" not in line for line in lines)
    assert lines[-1] == "permission::android.permission.VIBRATE"


def test_margin_analyzer_mirrors_linear_detector():
    weights = weights_fixture()
    analyzer = MarginAnalyzerTransport(weights, bias=-0.5)
    malicious_prompt = build_prompt(PromptKind.ANALYZE, "", BASE)
    response = analyzer.complete(malicious_prompt)
    assert response.startswith("Malicious.")
    assert "::" not in response

    evaded = BASE.union(build_feature_set([
        "permission::android.permission.VIBRATE",
        "hardware::android.hardware.camera",
    ]))
    response = analyzer.complete(build_prompt(PromptKind.ANALYZE, "", evaded))
    assert response.startswith("Benign.")
    assert "::" not in response
    assert parse_analyzer_output(response).is_benign


def test_margin_analyzer_tie_is_benign():
    weights = {VIBRATE: -1.0}
    analyzer = MarginAnalyzerTransport(weights, bias=1.0)
    features = build_feature_set(["permission::android.permission.VIBRATE"])
    response = analyzer.complete(build_prompt(PromptKind.ANALYZE, "", features))
    assert response.startswith("Benign.")


def test_concurrent_backend_invocations_are_safe():
    backend = Backend(descriptor(max_in_flight=4), EchoTransport())
    prompt = build_prompt(PromptKind.PROPOSE, "", BASE)
    results = []
    errors = []

    def work():
        try:
            results.append(backend.invoke(prompt))
        except Exception as exc:  # pragma: no cover - diagnostic
            errors.append(exc)

    threads = [threading.Thread(target=work) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    assert len(results) == 8
    assert all(r == prompt for r in results)
