import json
import threading
import time

import httpx
import pytest

from phigrade.backend import (AuthError, BackendConfig, BackendError, Fault, FingerprintMiss,
                              HTTPBackend, MalformedResponse, RetriesExhausted, StubBackend,
                              backoff_delay, build_payload, call_with_retries, fingerprint,
                              load_providers, malformed, set_field, TransientError)

MESSAGES = [{"role": "system", "content": "s"}, {"role": "user", "content": "病情描述：头痛。"}]
OK_BODY = {"choices": [{"message": {"content": '{"triples": []}'}}], "model": "m",
           "usage": {"total_tokens": 3}}


def _config(**kw):
    base = dict(provider_name="p", endpoint_url="https://api.example/v1/chat/completions",
                model_name="m", api_key_env_var="P_KEY", max_retries=3)
    base.update(kw)
    return BackendConfig(**base)


def _backend(handler, config=None, **kw):
    client = httpx.Client(transport=httpx.MockTransport(handler))
    return HTTPBackend(config or _config(), client=client, sleep=lambda s: None,
                       env={"P_KEY": "sk-secret-123"}, **kw)


def _script(*responses):
    seen = []

    def handler(request):
        seen.append(request)
        status, body = responses[min(len(seen), len(responses)) - 1]
        return httpx.Response(status, json=body) if isinstance(body, dict) else \
            httpx.Response(status, text=body)
    return handler, seen


def test_retry_arithmetic():
    handler, seen = _script((429, "slow down"), (429, "slow down"), (200, OK_BODY))
    result = _backend(handler).complete(MESSAGES)
    assert result.attempt_count == 3 and len(seen) == 3
    assert result.raw_text == '{"triples": []}'
    assert result.provider_echo == {"model": "m", "usage": {"total_tokens": 3}}


def test_retries_exhausted():
    handler, seen = _script((503, "down"))
    with pytest.raises(RetriesExhausted):
        _backend(handler).complete(MESSAGES)
    assert len(seen) == 4          # first try + max_retries


def test_timeout_is_transient():
    calls = []

    def handler(request):
        calls.append(1)
        if len(calls) == 1:
            raise httpx.ReadTimeout("slow", request=request)
        return httpx.Response(200, json=OK_BODY)
    assert _backend(handler).complete(MESSAGES).attempt_count == 2


@pytest.mark.parametrize("code", [401, 403])
def test_auth_rejection_is_not_retried(code):
    handler, seen = _script((code, "no"))
    with pytest.raises(AuthError):
        _backend(handler).complete(MESSAGES)
    assert len(seen) == 1


def test_missing_key_fails_before_network():
    handler, seen = _script((200, OK_BODY))
    client = httpx.Client(transport=httpx.MockTransport(handler))
    backend = HTTPBackend(_config(), client=client, env={})
    with pytest.raises(AuthError, match="P_KEY"):
        backend.complete(MESSAGES)
    assert seen == []


def test_other_client_errors_fail_fast():
    handler, seen = _script((404, "nope"))
    with pytest.raises(BackendError):
        _backend(handler).complete(MESSAGES)
    assert len(seen) == 1


@pytest.mark.parametrize("body", [{"choices": []}, {"x": 1}, "not json",
                                  {"choices": [{"message": {"content": None}}]}])
def test_malformed_provider_response(body):
    handler, _ = _script((200, body))
    with pytest.raises(MalformedResponse):
        _backend(handler).complete(MESSAGES)


def test_schema_attached_and_degraded():
    bodies = []

    def handler(request):
        payload = json.loads(request.content)
        bodies.append(payload)
        if "response_format" in payload:
            return httpx.Response(400, text="response_format json_schema is not supported")
        return httpx.Response(200, json=OK_BODY)
    backend = _backend(handler)
    result = backend.complete(MESSAGES, {"type": "object"})
    assert result.attempt_count == 1
    assert "response_format" in bodies[0] and "response_format" not in bodies[1]
    assert bodies[0]["response_format"]["json_schema"]["strict"] is True
    # later calls skip the schema straight away
    backend.complete(MESSAGES, {"type": "object"})
    assert len(bodies) == 3 and "response_format" not in bodies[2]


def test_payload_and_auth_header():
    seen = []

    def handler(request):
        seen.append(request)
        return httpx.Response(200, json=OK_BODY)
    _backend(handler).complete(MESSAGES)
    assert seen[0].headers["authorization"] == "Bearer sk-secret-123"
    payload = json.loads(seen[0].content)
    assert payload == {"model": "m", "messages": MESSAGES, "temperature": 0.0}
    assert "temperature" not in build_payload(_config(temperature=None), MESSAGES, None)


def test_audit_log_is_redacted(tmp_path):
    handler, _ = _script((429, "x"), (200, OK_BODY))
    log = tmp_path / "audit.jsonl"
    _backend(handler, audit_log=log).complete(MESSAGES, {"type": "object"})
    text = log.read_text(encoding="utf-8")
    events = [json.loads(line) for line in text.splitlines()]
    assert [e["status"] for e in events] == [429, 200]
    assert events[0]["input"] == fingerprint(MESSAGES[-1]["content"])
    assert "sk-secret" not in text and "头痛" not in text


def test_concurrency_cap():
    config = _config(provider_name="capped", max_in_flight=2)
    state = {"now": 0, "peak": 0}
    lock = threading.Lock()

    def handler(request):
        with lock:
            state["now"] += 1
            state["peak"] = max(state["peak"], state["now"])
        time.sleep(0.02)
        with lock:
            state["now"] -= 1
        return httpx.Response(200, json=OK_BODY)
    # two backend objects for one provider share the limit
    backends = [_backend(handler, config), _backend(handler, config)]
    threads = [threading.Thread(target=backends[i % 2].complete, args=(MESSAGES,))
               for i in range(10)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert state["peak"] == 2


def test_config_validation():
    with pytest.raises(ValueError):
        _config(endpoint_url="ftp://x")
    with pytest.raises(ValueError):
        _config(max_in_flight=0)
    providers = load_providers()
    assert {"gpt-4o-mini", "deepseek-chat"} <= set(providers)
    assert providers["gpt-5"].temperature is None


def test_backoff_and_retry_helper():
    assert [backoff_delay(n) for n in (1, 2, 3, 10)] == [1.0, 2.0, 4.0, 30.0]
    waits = []

    def flaky(n):
        if n < 3:
            raise TransientError("x")
        return "ok"
    assert call_with_retries(flaky, 5, waits.append) == ("ok", 3)
    assert waits == [1.0, 2.0]


# ---------------------------------------------------------------------------
# stub


def test_stub_replay_and_miss():
    key = fingerprint(MESSAGES[-1]["content"])
    stub = StubBackend({key: '{"triples": []}'})
    assert stub.complete(MESSAGES).raw_text == '{"triples": []}'
    with pytest.raises(FingerprintMiss):
        StubBackend({}).complete(MESSAGES)


def test_stub_faults():
    key = fingerprint(MESSAGES[-1]["content"])
    answer = json.dumps({"triples": [{"entity": "头痛", "category": "chief complaint", "level": 2}]},
                        ensure_ascii=False)
    stub = StubBackend({key: answer}, {key: Fault(transient_failures=2)})
    assert stub.complete(MESSAGES).attempt_count == 3
    with pytest.raises(RetriesExhausted):
        StubBackend({key: answer}, {key: Fault(permanent=True)}).complete(MESSAGES)
    assert StubBackend({key: answer}, {key: malformed()}).complete(MESSAGES).raw_text.startswith("Sorry")
    level9 = StubBackend({key: answer}, {key: Fault(transform=set_field(0, "level", 9))})
    assert json.loads(level9.complete(MESSAGES).raw_text)["triples"][0]["level"] == 9


def test_stub_is_thread_safe_and_deterministic():
    texts = [f"记录{i}" for i in range(50)]
    table = {fingerprint(t): t[::-1] for t in texts}
    stub = StubBackend(table, record_requests=True)
    out = {}

    def call(t):
        out[t] = stub.complete([{"role": "user", "content": t}]).raw_text
    threads = [threading.Thread(target=call, args=(t,)) for t in texts]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert out == {t: t[::-1] for t in texts} and len(stub.requests) == 50
