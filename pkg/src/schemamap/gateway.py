"""Uniform access to chat-completion backends, plus a replayable mock.

Backends implement a single ``complete(request) -> CompletionResponse``
method. The HTTP backend speaks the de-facto OpenAI-compatible
chat-completions contract; the mock replays canned responses keyed by a
digest of the whitespace-normalized prompt, so fixtures survive cosmetic
template edits. A Gateway wraps any backend with bounded retries, an
in-flight cap, token accounting, and an append-only transcript.
"""

from __future__ import annotations

import json
import logging
import math
import threading
import time
from dataclasses import dataclass, field, replace
from hashlib import sha256
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Protocol, Sequence, Union

import httpx

logger = logging.getLogger(__name__)

NEG_INF = float("-inf")


class GatewayError(Exception):
    pass


class TransportFailure(GatewayError):
    """Transient transport problem; retried up to the configured limit."""


class BackendRefusal(GatewayError):
    pass


class ContextOverflow(GatewayError):
    """Prompt exceeds the backend's context window; caller should split."""


class UnfixturedPrompt(GatewayError):
    """The mock has no recorded response for this prompt digest."""


class CapabilityError(GatewayError):
    """Backend cannot provide what was asked for (e.g. logprobs)."""


class FormatError(GatewayError):
    """Model output did not contain the contracted structure."""

    def __init__(self, message: str, raw_text: str):
        super().__init__(message)
        self.raw_text = raw_text


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    temperature: float = 0.0
    seed: Optional[int] = None
    max_output_tokens: int = 2048
    want_logprobs: bool = False
    top_logprobs: int = 5

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.want_logprobs and self.top_logprobs < 1:
            raise ValueError("top_logprobs must be >= 1 when logprobs are requested")


@dataclass(frozen=True)
class Usage:
    input_tokens: int
    output_tokens: int
    estimated: bool = False

    def __post_init__(self):
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be >= 0")

    @property
    def total(self) -> int:
        return self.input_tokens + self.output_tokens


@dataclass(frozen=True)
class TokenLogprob:
    token: str
    logprob: float
    top: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        for _, lp in ((self.token, self.logprob), *self.top):
            if lp > 1e-9:
                raise ValueError(f"logprob {lp} is positive")


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    finish_reason: str = "stop"
    usage: Optional[Usage] = None
    logprobs: Optional[tuple[TokenLogprob, ...]] = None


class Backend(Protocol):
    def complete(self, request: CompletionRequest) -> CompletionResponse: ...


def estimate_tokens(text: str) -> int:
    """Cheap length-based token estimate, used when a backend reports no usage."""
    return max(1, math.ceil(len(text) / 4))


def prompt_digest(prompt: str) -> str:
    normalized = " ".join(prompt.split())
    return sha256(normalized.encode("utf-8")).hexdigest()


# --- backends -----------------------------------------------------------------


class FunctionBackend:
    """Adapter turning a plain function into a backend; handy in tests."""

    def __init__(self, fn: Callable[[CompletionRequest], CompletionResponse]):
        self._fn = fn

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        return self._fn(request)


class StaticBackend:
    """Answers every prompt with the same fixed text."""

    def __init__(self, text: str, logprobs: Optional[Sequence[TokenLogprob]] = None):
        self._text = text
        self._logprobs = tuple(logprobs) if logprobs else None

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        return CompletionResponse(
            text=self._text,
            usage=Usage(estimate_tokens(request.prompt), estimate_tokens(self._text), estimated=True),
            logprobs=self._logprobs,
        )


def _response_to_record(response: CompletionResponse) -> dict[str, Any]:
    record: dict[str, Any] = {"text": response.text, "finish_reason": response.finish_reason}
    if response.usage is not None:
        record["usage"] = {
            "input_tokens": response.usage.input_tokens,
            "output_tokens": response.usage.output_tokens,
            "estimated": response.usage.estimated,
        }
    if response.logprobs is not None:
        record["logprobs"] = [
            {"token": t.token, "logprob": t.logprob, "top": [list(p) for p in t.top]}
            for t in response.logprobs
        ]
    return record


def _record_to_response(record: Mapping[str, Any]) -> CompletionResponse:
    usage = None
    if "usage" in record:
        u = record["usage"]
        usage = Usage(u["input_tokens"], u["output_tokens"], u.get("estimated", False))
    logprobs = None
    if "logprobs" in record:
        logprobs = tuple(
            TokenLogprob(t["token"], t["logprob"], tuple((tok, lp) for tok, lp in t.get("top", ())))
            for t in record["logprobs"]
        )
    return CompletionResponse(
        text=record["text"],
        finish_reason=record.get("finish_reason", "stop"),
        usage=usage,
        logprobs=logprobs,
    )


class MockBackend:
    """Replays fixture files (one JSON per prompt digest) from a directory."""

    def __init__(self, fixtures_dir: Union[str, Path]):
        self.fixtures_dir = Path(fixtures_dir)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        digest = prompt_digest(request.prompt)
        path = self.fixtures_dir / f"{digest}.json"
        if not path.exists():
            raise UnfixturedPrompt(
                f"no fixture {digest} for prompt starting {request.prompt[:80]!r}"
            )
        record = json.loads(path.read_text(encoding="utf-8"))
        response = _record_to_response(record)
        if response.usage is None:
            response = replace(
                response,
                usage=Usage(
                    estimate_tokens(request.prompt), estimate_tokens(response.text), estimated=True
                ),
            )
        return response


def write_fixture(
    fixtures_dir: Union[str, Path], prompt: str, response: CompletionResponse
) -> Path:
    """Store a response under the prompt's digest; returns the fixture path."""
    fixtures_dir = Path(fixtures_dir)
    fixtures_dir.mkdir(parents=True, exist_ok=True)
    digest = prompt_digest(prompt)
    record = {"prompt_sha256": digest, "prompt_preview": prompt[:200]}
    record.update(_response_to_record(response))
    path = fixtures_dir / f"{digest}.json"
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


class RecordingBackend:
    """Pass-through backend persisting every response as a replayable fixture."""

    def __init__(self, inner: Backend, fixtures_dir: Union[str, Path]):
        self.inner = inner
        self.fixtures_dir = Path(fixtures_dir)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        response = self.inner.complete(request)
        write_fixture(self.fixtures_dir, request.prompt, response)
        return response


_CONTEXT_HINTS = ("context length", "maximum context", "context window", "too many tokens")


class HttpBackend:
    """OpenAI-compatible chat-completions client."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: Optional[str] = None,
        timeout: float = 120.0,
        client: Optional[httpx.Client] = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = client or httpx.Client(timeout=timeout, headers=headers)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        payload: dict[str, Any] = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        if request.seed is not None:
            payload["seed"] = request.seed
        if request.want_logprobs:
            payload["logprobs"] = True
            payload["top_logprobs"] = request.top_logprobs

        try:
            http_response = self._client.post(f"{self.base_url}/chat/completions", json=payload)
        except httpx.TransportError as exc:
            raise TransportFailure(str(exc)) from exc

        if http_response.status_code >= 500:
            raise TransportFailure(f"server error {http_response.status_code}")
        if http_response.status_code >= 400:
            detail = http_response.text[:500]
            if any(hint in detail.lower() for hint in _CONTEXT_HINTS):
                raise ContextOverflow(detail)
            raise GatewayError(f"backend rejected request ({http_response.status_code}): {detail}")

        doc = http_response.json()
        choice = doc["choices"][0]
        message = choice.get("message", {})
        if message.get("refusal"):
            raise BackendRefusal(str(message["refusal"]))
        text = message.get("content") or ""

        usage = None
        if "usage" in doc and doc["usage"]:
            usage = Usage(
                int(doc["usage"].get("prompt_tokens", 0)),
                int(doc["usage"].get("completion_tokens", 0)),
            )
        logprobs = None
        lp_content = (choice.get("logprobs") or {}).get("content")
        if lp_content:
            logprobs = tuple(
                TokenLogprob(
                    entry["token"],
                    min(0.0, float(entry["logprob"])),
                    tuple(
                        (alt["token"], min(0.0, float(alt["logprob"])))
                        for alt in entry.get("top_logprobs", ())
                    ),
                )
                for entry in lp_content
            )
        return CompletionResponse(
            text=text,
            finish_reason=choice.get("finish_reason", "stop"),
            usage=usage,
            logprobs=logprobs,
        )


# --- gateway ------------------------------------------------------------------


@dataclass
class GatewayTotals:
    calls: int = 0
    input_tokens: int = 0
    output_tokens: int = 0

    @property
    def total_tokens(self) -> int:
        return self.input_tokens + self.output_tokens


class Gateway:
    """Retries, throttling, usage accounting, and transcripts over a backend."""

    def __init__(
        self,
        backend: Backend,
        max_retries: int = 3,
        backoff_base: float = 0.5,
        in_flight_cap: int = 4,
        transcript_path: Optional[Union[str, Path]] = None,
    ):
        self.backend = backend
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self._semaphore = threading.Semaphore(in_flight_cap)
        self._lock = threading.Lock()
        self.totals = GatewayTotals()
        self.transcript_path = Path(transcript_path) if transcript_path else None
        if self.transcript_path:
            self.transcript_path.parent.mkdir(parents=True, exist_ok=True)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        attempt = 0
        while True:
            try:
                with self._semaphore:
                    response = self.backend.complete(request)
                break
            except TransportFailure as exc:
                attempt += 1
                if attempt > self.max_retries:
                    raise
                delay = self.backoff_base * (2 ** (attempt - 1))
                logger.warning("transport failure (%s); retry %d in %.1fs", exc, attempt, delay)
                time.sleep(delay)

        if response.usage is None:
            response = replace(
                response,
                usage=Usage(
                    estimate_tokens(request.prompt), estimate_tokens(response.text), estimated=True
                ),
            )
        self._account(request, response)
        return response

    def _account(self, request: CompletionRequest, response: CompletionResponse) -> None:
        with self._lock:
            self.totals.calls += 1
            self.totals.input_tokens += response.usage.input_tokens
            self.totals.output_tokens += response.usage.output_tokens
            if self.transcript_path:
                record = {
                    "seq": self.totals.calls,
                    "ts": time.time(),
                    "prompt_sha256": prompt_digest(request.prompt),
                    "prompt": request.prompt,
                    "text": response.text,
                    "finish_reason": response.finish_reason,
                    "usage": {
                        "input_tokens": response.usage.input_tokens,
                        "output_tokens": response.usage.output_tokens,
                        "estimated": response.usage.estimated,
                    },
                }
                with self.transcript_path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, sort_keys=True) + "\n")


# --- output interpretation ------------------------------------------------------

_TYPE_CHECKS: dict[str, Callable[[Any], bool]] = {
    "str": lambda v: isinstance(v, str),
    "int": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "bool": lambda v: isinstance(v, bool),
    "list[str]": lambda v: isinstance(v, list) and all(isinstance(x, str) for x in v),
}


def _json_objects(text: str) -> list[str]:
    """Spans of balanced top-level {...} groups, honoring string literals."""
    spans = []
    depth = 0
    start = -1
    in_string = False
    escaped = False
    for i, ch in enumerate(text):
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}":
            if depth > 0:
                depth -= 1
                if depth == 0:
                    spans.append(text[start : i + 1])
    return spans


def parse_structured(
    response: Union[CompletionResponse, str], contract: Mapping[str, Any]
) -> dict[str, Any]:
    """Extract the last well-formed JSON object and validate it against contract.

    The reasoning comes first by construction, so the final object wins when
    several appear. Raises FormatError (carrying the raw text) when nothing
    parseable and conforming is found.
    """
    text = response.text if isinstance(response, CompletionResponse) else response
    fields: Mapping[str, str] = contract.get("fields", {})
    last_error = "no JSON object found"
    for span in reversed(_json_objects(text)):
        try:
            obj = json.loads(span)
        except json.JSONDecodeError:
            continue
        if not isinstance(obj, dict):
            continue
        problems = []
        for name, type_tag in fields.items():
            if name not in obj:
                problems.append(f"missing field {name!r}")
            elif not _TYPE_CHECKS.get(type_tag, lambda v: True)(obj[name]):
                problems.append(f"field {name!r} is not {type_tag}")
        if not problems:
            return obj
        last_error = "; ".join(problems)
    raise FormatError(f"unusable model output: {last_error}", text)


def option_logprobs(
    response: CompletionResponse, labels: Sequence[str]
) -> dict[str, float]:
    """Logprob per option label at the answer position of a rank response.

    The answer position is the first non-whitespace token of the final
    non-empty line. Labels absent from the reported alternatives map to -inf
    (probability zero after softmax). Raises CapabilityError when the response
    carries no logprobs.
    """
    if response.logprobs is None:
        raise CapabilityError("backend reported no logprobs")

    text = "".join(t.token for t in response.logprobs)
    if text != response.text:
        raise CapabilityError("token stream does not reconstruct the response text")

    stripped = response.text.rstrip()
    line_start = stripped.rfind("\n") + 1
    while line_start < len(stripped) and stripped[line_start].isspace():
        line_start += 1
    if line_start >= len(stripped):
        raise CapabilityError("response has no answer line")

    offset = 0
    answer_token: Optional[TokenLogprob] = None
    for tok in response.logprobs:
        end = offset + len(tok.token)
        if offset <= line_start < end:
            answer_token = tok
            break
        offset = end
    if answer_token is None:
        raise CapabilityError("answer position not covered by the token stream")

    alternatives: dict[str, float] = {}
    for token, lp in (*answer_token.top, (answer_token.token, answer_token.logprob)):
        key = token.strip()
        if key and (key not in alternatives or lp > alternatives[key]):
            alternatives[key] = lp
    return {label: alternatives.get(label, NEG_INF) for label in labels}
