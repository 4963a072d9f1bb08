"""Provider-agnostic chat-completion gateway.

Speaks the OpenAI-compatible chat-completions dialect over HTTP, with a
content-addressed response cache, a per-minute request budget, retry with
exponential backoff, structured-output enforcement with a repair loop, and
a deterministic scriptable mock backend for offline runs and golden tests.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    AuthError,
    BudgetExceeded,
    ParseError,
    StructuredOutputError,
    TransportError,
    UsageError,
)

VALID_ROLES = ("System", "User", "Assistant")


@dataclass(frozen=True)
class Message:
    role: str
    content: str


@dataclass(frozen=True)
class SchemaField:
    name: str
    kind: str  # string | boolean | ranges | object | list | integer
    required: bool = True


@dataclass(frozen=True)
class StructuredSchema:
    fields: tuple[SchemaField, ...]
    enforce_order: bool = True

    def __init__(self, fields, enforce_order: bool = True):
        object.__setattr__(self, "fields", tuple(fields))
        object.__setattr__(self, "enforce_order", enforce_order)
        names = [f.name for f in self.fields]
        if len(names) != len(set(names)):
            raise UsageError("schema field names must be unique")


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple[Message, ...]
    temperature: float = 0.2
    seed: int | None = None
    max_tokens: int = 2048
    response_schema: StructuredSchema | None = None

    def __post_init__(self):
        if not self.messages:
            raise UsageError("ChatRequest requires at least one message")
        if self.messages[0].role not in ("System", "User"):
            raise UsageError("first message role must be System or User")
        for m in self.messages:
            if m.role not in VALID_ROLES:
                raise UsageError(f"unknown message role {m.role!r}")
        if not (0.0 <= self.temperature <= 2.0):
            raise UsageError("temperature must be in [0, 2]")
        if self.max_tokens <= 0:
            raise UsageError("max_tokens must be positive")


@dataclass
class CompletionResult:
    text: str
    usage: dict[str, int]
    cached: bool


@dataclass
class GatewayConfig:
    model_id: str = "mock-model"
    backend: str = "mock"  # mock | http
    endpoint: str | None = None
    token_env: str = "OSCE_LLM_TOKEN"
    max_retries: int = 3
    per_minute_budget: int = 600
    cache_dir: Path | None = None
    temperature: float = 0.2

    def __post_init__(self):
        if self.max_retries < 0:
            raise UsageError("max_retries must be >= 0")
        if self.per_minute_budget <= 0:
            raise UsageError("per-minute budget must be positive")


def canonical_request_key(request: ChatRequest) -> str:
    """SHA-256 of the canonicalized request; the cache key."""
    import hashlib

    schema = None
    if request.response_schema is not None:
        schema = [
            {"name": f.name, "kind": f.kind, "required": f.required}
            for f in request.response_schema.fields
        ]
    payload = json.dumps(
        {
            "model_id": request.model_id,
            "messages": [
                {"role": m.role, "content": m.content} for m in request.messages
            ],
            "temperature": request.temperature,
            "seed": request.seed,
            "max_tokens": request.max_tokens,
            "schema": schema,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


# --- JSON extraction ----------------------------------------------------------

def extract_json_object(text: str) -> dict:
    """Find and parse the first balanced JSON object in ``text``.

    Tolerates code-fence wrappers and leading/trailing prose.
    """
    text = re.sub(r"```(?:json)?", "", text)
    start = text.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escape = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_string:
                if escape:
                    escape = False
                elif ch == "\\":
                    escape = True
                elif ch == '"':
                    in_string = False
            elif ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    candidate = text[start : i + 1]
                    try:
                        parsed = json.loads(candidate)
                    except json.JSONDecodeError:
                        break
                    if isinstance(parsed, dict):
                        return parsed
                    break
        start = text.find("{", start + 1)
    raise ParseError("no balanced JSON object found in response")


def _validate_ranges(value) -> list[tuple[int, int]]:
    if not isinstance(value, list):
        raise ParseError("expected a list of [start, end] turn-index pairs")
    ranges = []
    for item in value:
        if (
            not isinstance(item, (list, tuple))
            or len(item) != 2
            or not all(isinstance(x, int) and not isinstance(x, bool) for x in item)
        ):
            raise ParseError(f"invalid turn-index range: {item!r}")
        ranges.append((item[0], item[1]))
    return ranges


def validate_structured(record: dict, schema: StructuredSchema) -> dict:
    """Check required fields, types and field order; normalize values."""
    out = {}
    for spec in schema.fields:
        if spec.name not in record:
            if spec.required:
                raise ParseError(f"missing required field {spec.name!r}")
            continue
        value = record[spec.name]
        if spec.kind == "string":
            if not isinstance(value, str):
                raise ParseError(f"field {spec.name!r} must be a string")
        elif spec.kind == "boolean":
            if not isinstance(value, bool):
                raise ParseError(f"field {spec.name!r} must be a boolean")
        elif spec.kind == "integer":
            if not isinstance(value, int) or isinstance(value, bool):
                raise ParseError(f"field {spec.name!r} must be an integer")
        elif spec.kind == "ranges":
            value = _validate_ranges(value)
        elif spec.kind == "object":
            if not isinstance(value, dict):
                raise ParseError(f"field {spec.name!r} must be an object")
        elif spec.kind == "list":
            if not isinstance(value, list):
                raise ParseError(f"field {spec.name!r} must be a list")
        else:
            raise UsageError(f"unknown schema field kind {spec.kind!r}")
        out[spec.name] = value
    if schema.enforce_order:
        known = [name for name in record if name in {f.name for f in schema.fields}]
        expected = [f.name for f in schema.fields if f.name in record]
        if known != expected:
            raise ParseError(
                f"fields out of order: got {known}, expected {expected}"
            )
    return out


# --- backends -----------------------------------------------------------------

class MockBackend:
    """Deterministic scriptable backend.

    Responses key on request content: the first script entry whose ``match``
    substring occurs in the concatenated message contents wins.  When no
    entry matches, the optional synthesizer callable is consulted; the
    default synthesizer produces deterministic plausible responses for every
    pipeline prompt (see mockllm).
    """

    def __init__(self, script=None, synthesizer=None):
        self.script = list(script or [])
        if synthesizer is None:
            from .mockllm import synthesize

            synthesizer = synthesize
        self.synthesizer = synthesizer
        self.call_count = 0

    @classmethod
    def from_script_file(cls, path: Path | str) -> "MockBackend":
        entries = json.loads(Path(path).read_text(encoding="utf-8"))
        script = []
        for entry in entries:
            response = entry["response"]
            if not isinstance(response, str):
                response = json.dumps(response, ensure_ascii=False)
            script.append((entry["match"], response))
        return cls(script=script)

    def complete(self, request: ChatRequest) -> tuple[str, dict[str, int]]:
        self.call_count += 1
        content = "\n".join(m.content for m in request.messages)
        for match, response in self.script:
            if match in content:
                return response, {"prompt_tokens": 0, "completion_tokens": 0}
        if self.synthesizer is not None:
            return self.synthesizer(request), {
                "prompt_tokens": 0,
                "completion_tokens": 0,
            }
        raise TransportError("mock backend has no response for this request")


class HttpBackend:
    """OpenAI-compatible chat-completions client with retry and backoff."""

    def __init__(
        self,
        endpoint: str,
        token_env: str = "OSCE_LLM_TOKEN",
        max_retries: int = 3,
        backoff_base: float = 0.5,
        session=None,
    ):
        import requests

        self.endpoint = endpoint.rstrip("/")
        self.token_env = token_env
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.session = session or requests.Session()
        self.call_count = 0

    def complete(self, request: ChatRequest) -> tuple[str, dict[str, int]]:
        import requests

        token = os.environ.get(self.token_env)
        if not token:
            raise AuthError(f"environment variable {self.token_env} is not set")
        payload = {
            "model": request.model_id,
            "messages": [
                {"role": m.role.lower(), "content": m.content}
                for m in request.messages
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.seed is not None:
            payload["seed"] = request.seed
        delay = self.backoff_base
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt > 0:
                time.sleep(delay)
                delay *= 2  # monotonically non-decreasing backoff
            self.call_count += 1
            try:
                response = self.session.post(
                    f"{self.endpoint}/chat/completions",
                    json=payload,
                    headers={"Authorization": f"Bearer {token}"},
                    timeout=120,
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if response.status_code in (401, 403):
                raise AuthError(f"backend rejected credentials: {response.status_code}")
            if response.status_code >= 500 or response.status_code == 429:
                last_error = TransportError(f"HTTP {response.status_code}")
                continue
            if response.status_code != 200:
                raise TransportError(f"HTTP {response.status_code}: {response.text}")
            body = response.json()
            text = body["choices"][0]["message"]["content"]
            usage = body.get("usage", {})
            return text, usage
        raise TransportError(f"backend unreachable after retries: {last_error}")


# --- gateway ------------------------------------------------------------------

class _RateLimiter:
    def __init__(self, per_minute: int):
        self.per_minute = per_minute
        self._timestamps: list[float] = []
        self._lock = threading.Lock()

    def admit(self) -> None:
        now = time.monotonic()
        with self._lock:
            self._timestamps = [t for t in self._timestamps if now - t < 60.0]
            if len(self._timestamps) >= self.per_minute:
                raise BudgetExceeded(
                    f"per-minute budget of {self.per_minute} requests exhausted"
                )
            self._timestamps.append(now)


@dataclass
class Gateway:
    config: GatewayConfig
    backend: object = None

    _limiter: _RateLimiter = field(init=False, repr=False)
    _cache_lock: threading.Lock = field(init=False, repr=False)

    def __post_init__(self):
        if self.backend is None:
            if self.config.backend == "mock":
                self.backend = MockBackend()
            elif self.config.backend == "http":
                if not self.config.endpoint:
                    raise UsageError("http backend requires an endpoint URL")
                self.backend = HttpBackend(
                    self.config.endpoint,
                    token_env=self.config.token_env,
                    max_retries=self.config.max_retries,
                )
            else:
                raise UsageError(f"unknown backend kind {self.config.backend!r}")
        self._limiter = _RateLimiter(self.config.per_minute_budget)
        self._cache_lock = threading.Lock()

    def _cache_path(self, key: str) -> Path | None:
        if self.config.cache_dir is None:
            return None
        return Path(self.config.cache_dir) / f"{key}.json"

    def complete(self, request: ChatRequest) -> CompletionResult:
        key = canonical_request_key(request)
        cache_path = self._cache_path(key)
        if cache_path is not None:
            with self._cache_lock:
                if cache_path.exists():
                    cached = json.loads(cache_path.read_text(encoding="utf-8"))
                    return CompletionResult(
                        text=cached["text"], usage=cached["usage"], cached=True
                    )
        self._limiter.admit()
        text, usage = self.backend.complete(request)
        if cache_path is not None:
            with self._cache_lock:
                cache_path.parent.mkdir(parents=True, exist_ok=True)
                cache_path.write_text(
                    json.dumps(
                        {"text": text, "usage": usage},
                        sort_keys=True,
                        ensure_ascii=False,
                    ),
                    encoding="utf-8",
                )
        return CompletionResult(text=text, usage=dict(usage), cached=False)

    def complete_structured(self, request: ChatRequest) -> tuple[dict, int]:
        """Parsed record per the request's schema, plus the attempt count.

        On parse failure or a missing required field, re-prompts with the
        validation error appended, up to max_retries additional attempts.
        """
        if request.response_schema is None:
            raise UsageError("complete_structured requires a response_schema")
        schema = request.response_schema
        messages = list(request.messages)
        raw_attempts: list[str] = []
        for attempt in range(1, self.config.max_retries + 2):
            result = self.complete(
                ChatRequest(
                    model_id=request.model_id,
                    messages=tuple(messages),
                    temperature=request.temperature,
                    seed=request.seed,
                    max_tokens=request.max_tokens,
                    response_schema=schema,
                )
            )
            raw_attempts.append(result.text)
            try:
                record = extract_json_object(result.text)
                return validate_structured(record, schema), attempt
            except ParseError as exc:
                messages.append(Message("Assistant", result.text))
                messages.append(
                    Message(
                        "User",
                        "La réponse précédente est invalide : "
                        f"{exc}. Répondez uniquement avec l'objet JSON demandé.",
                    )
                )
        raise StructuredOutputError(
            f"no schema-conforming response after {len(raw_attempts)} attempts",
            raw_attempts,
        )

    def complete_structured_prompt(
        self,
        prompt: str,
        schema: StructuredSchema,
        temperature: float | None = None,
        seed: int | None = None,
    ) -> tuple[dict, int]:
        """Single-user-message convenience wrapper for pipeline operations."""
        request = ChatRequest(
            model_id=self.config.model_id,
            messages=(Message("User", prompt),),
            temperature=self.config.temperature if temperature is None else temperature,
            seed=seed,
            response_schema=schema,
        )
        return self.complete_structured(request)


JUDGMENT_SCHEMA = StructuredSchema(
    fields=[
        SchemaField("justification", "string"),
        SchemaField("evidence", "ranges"),
        SchemaField("decision", "boolean"),
    ]
)
