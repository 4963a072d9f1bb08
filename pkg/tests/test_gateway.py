"""Gateway behavior: cache keys, response cache, structured-output repair
loop, rate budget, HTTP backend retry/auth paths."""

import json

import pytest

from oscebench.errors import (
    AuthError,
    BudgetExceeded,
    ParseError,
    StructuredOutputError,
    TransportError,
    UsageError,
)
from oscebench.gateway import (
    ChatRequest,
    Gateway,
    GatewayConfig,
    HttpBackend,
    Message,
    MockBackend,
    SchemaField,
    StructuredSchema,
    canonical_request_key,
    extract_json_object,
    validate_structured,
)

SCHEMA = StructuredSchema(
    [SchemaField("answer", "string"), SchemaField("ok", "boolean")]
)


def _request(content="bonjour", **kwargs):
    return ChatRequest(
        model_id="mock-model", messages=(Message("User", content),), **kwargs
    )


# --- request validation ------------------------------------------------------------


def test_chat_request_validation():
    with pytest.raises(UsageError):
        ChatRequest(model_id="m", messages=())
    with pytest.raises(UsageError):
        ChatRequest(model_id="m", messages=(Message("Assistant", "x"),))
    with pytest.raises(UsageError):
        ChatRequest(model_id="m", messages=(Message("Robot", "x"),))
    with pytest.raises(UsageError):
        _request(temperature=3.0)
    with pytest.raises(UsageError):
        _request(max_tokens=0)


def test_schema_requires_unique_field_names():
    with pytest.raises(UsageError):
        StructuredSchema([SchemaField("a", "string"), SchemaField("a", "boolean")])


# --- cache keys ----------------------------------------------------------------------


def test_canonical_key_is_stable_and_sensitive():
    assert canonical_request_key(_request()) == canonical_request_key(_request())
    assert canonical_request_key(_request()) != canonical_request_key(
        _request(temperature=0.7)
    )
    assert canonical_request_key(_request()) != canonical_request_key(
        _request(seed=1)
    )
    assert canonical_request_key(_request()) != canonical_request_key(
        _request("bonsoir")
    )
    with_schema = _request(response_schema=SCHEMA)
    assert canonical_request_key(with_schema) != canonical_request_key(_request())


def test_cache_hit_skips_backend(tmp_path):
    backend = MockBackend(script=[("bonjour", "salut")])
    gateway = Gateway(GatewayConfig(cache_dir=tmp_path), backend=backend)
    first = gateway.complete(_request())
    second = gateway.complete(_request())
    assert (first.text, first.cached) == ("salut", False)
    assert (second.text, second.cached) == ("salut", True)
    assert backend.call_count == 1
    # a different request misses the cache
    gateway.complete(_request("bonsoir"))
    assert backend.call_count == 2


def test_cache_hits_bypass_the_rate_budget(tmp_path):
    backend = MockBackend(script=[("bonjour", "salut")])
    gateway = Gateway(
        GatewayConfig(cache_dir=tmp_path, per_minute_budget=1), backend=backend
    )
    gateway.complete(_request())
    for _ in range(5):
        assert gateway.complete(_request()).cached is True


def test_rate_budget_exhaustion():
    backend = MockBackend(script=[("", "ok")])
    gateway = Gateway(GatewayConfig(per_minute_budget=2), backend=backend)
    gateway.complete(_request("un"))
    gateway.complete(_request("deux"))
    with pytest.raises(BudgetExceeded):
        gateway.complete(_request("trois"))


# --- JSON extraction and schema validation ---------------------------------------------


def test_extract_json_object_tolerates_fences_and_prose():
    payload = {"answer": "oui", "ok": True}
    body = json.dumps(payload)
    assert extract_json_object(body) == payload
    assert extract_json_object(f"Voici :\n```json\n{body}\n```\nmerci") == payload
    assert extract_json_object(f"préambule {{pas du json}} puis {body}") == payload
    nested = '{"a": "br{ace}s and \\"quotes\\"", "b": {"c": 1}}'
    assert extract_json_object(nested)["b"] == {"c": 1}
    with pytest.raises(ParseError):
        extract_json_object("rien du tout")
    with pytest.raises(ParseError):
        extract_json_object("[1, 2, 3]")


def test_validate_structured_types_and_order():
    record = {"answer": "oui", "ok": True}
    assert validate_structured(record, SCHEMA) == record
    with pytest.raises(ParseError):
        validate_structured({"answer": "oui"}, SCHEMA)
    with pytest.raises(ParseError):
        validate_structured({"answer": 3, "ok": True}, SCHEMA)
    with pytest.raises(ParseError):
        validate_structured({"answer": "oui", "ok": 1}, SCHEMA)
    with pytest.raises(ParseError):
        validate_structured({"ok": True, "answer": "oui"}, SCHEMA)
    relaxed = StructuredSchema(SCHEMA.fields, enforce_order=False)
    assert validate_structured({"ok": True, "answer": "oui"}, relaxed) == record


def test_validate_structured_normalizes_ranges():
    schema = StructuredSchema([SchemaField("evidence", "ranges")])
    out = validate_structured({"evidence": [[0, 2], [5, 5]]}, schema)
    assert out["evidence"] == [(0, 2), (5, 5)]
    for bad in ([[0]], [[0, "1"]], [[0, True]], "0-2"):
        with pytest.raises(ParseError):
            validate_structured({"evidence": bad}, schema)


def test_validate_structured_optional_fields():
    schema = StructuredSchema(
        [SchemaField("order", "list"), SchemaField("phases", "object", required=False)]
    )
    assert validate_structured({"order": ["a"]}, schema) == {"order": ["a"]}


# --- structured-output repair loop ----------------------------------------------------


def test_repair_loop_recovers_on_second_attempt():
    good = json.dumps({"answer": "oui", "ok": True})
    backend = MockBackend(
        script=[("invalide", good), ("bonjour", "pas du json")], synthesizer=None
    )
    gateway = Gateway(GatewayConfig(), backend=backend)
    record, attempts = gateway.complete_structured(
        _request(response_schema=SCHEMA)
    )
    assert record == {"answer": "oui", "ok": True}
    assert attempts == 2
    assert backend.call_count == 2


def test_repair_loop_exhaustion_keeps_raw_attempts():
    backend = MockBackend(script=[("", "toujours pas du json")], synthesizer=None)
    gateway = Gateway(GatewayConfig(max_retries=2), backend=backend)
    with pytest.raises(StructuredOutputError) as exc_info:
        gateway.complete_structured(_request(response_schema=SCHEMA))
    assert exc_info.value.attempts == ["toujours pas du json"] * 3
    assert backend.call_count == 3


def test_complete_structured_requires_schema():
    gateway = Gateway(GatewayConfig())
    with pytest.raises(UsageError):
        gateway.complete_structured(_request())


# --- HTTP backend -----------------------------------------------------------------------


class _FakeResponse:
    def __init__(self, status_code, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload
        self.text = text

    def json(self):
        return self._payload


class _FakeSession:
    def __init__(self, responses):
        self.responses = list(responses)
        self.requests = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.requests.append({"url": url, "json": json, "headers": headers})
        return self.responses.pop(0)


def _http_backend(responses, monkeypatch, **kwargs):
    monkeypatch.setenv("OSCE_LLM_TOKEN", "sekret")
    kwargs.setdefault("backoff_base", 0.0)
    return HttpBackend(
        "https://llm.example/v1", session=_FakeSession(responses), **kwargs
    )


def _ok_response(text="salut"):
    return _FakeResponse(
        200,
        {"choices": [{"message": {"content": text}}], "usage": {"total_tokens": 7}},
    )


def test_http_backend_success(monkeypatch):
    backend = _http_backend([_ok_response()], monkeypatch)
    text, usage = backend.complete(_request())
    assert text == "salut"
    assert usage == {"total_tokens": 7}
    sent = backend.session.requests[0]
    assert sent["url"] == "https://llm.example/v1/chat/completions"
    assert sent["headers"]["Authorization"] == "Bearer sekret"
    assert sent["json"]["messages"][0]["role"] == "user"


def test_http_backend_requires_token(monkeypatch):
    monkeypatch.delenv("OSCE_LLM_TOKEN", raising=False)
    backend = HttpBackend("https://llm.example/v1", session=_FakeSession([]))
    with pytest.raises(AuthError):
        backend.complete(_request())


def test_http_backend_auth_rejection_is_not_retried(monkeypatch):
    backend = _http_backend([_FakeResponse(401)], monkeypatch)
    with pytest.raises(AuthError):
        backend.complete(_request())
    assert backend.call_count == 1


def test_http_backend_retries_server_errors(monkeypatch):
    backend = _http_backend(
        [_FakeResponse(500), _FakeResponse(429), _ok_response()], monkeypatch
    )
    text, _ = backend.complete(_request())
    assert text == "salut"
    assert backend.call_count == 3


def test_http_backend_gives_up_after_retries(monkeypatch):
    backend = _http_backend(
        [_FakeResponse(500)] * 3, monkeypatch, max_retries=2
    )
    with pytest.raises(TransportError):
        backend.complete(_request())
    assert backend.call_count == 3


def test_gateway_http_backend_requires_endpoint():
    with pytest.raises(UsageError):
        Gateway(GatewayConfig(backend="http"))
    with pytest.raises(UsageError):
        Gateway(GatewayConfig(backend="carrier-pigeon"))
