"""Chat-completion backends, session bookkeeping, JSON extraction, and the repair loop.

Two backends ship here: a live HTTP adapter speaking the de-facto
chat-completion JSON shape, and a deterministic mock that replays a scripted
transcript. Live completions are cached on disk keyed by the model name and
the full message history so repeated runs are cheap and reproducible.
"""

import hashlib
import json
import os
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path

from .errors import AdapterError, ContractError, PreconditionError
from .model import PromptText, RepairReport


class SchemaError(ContractError):
    def __init__(self, path: str, message: str):
        where = f"{path}: " if path else ""
        super().__init__(f"{where}{message}")
        self.path = path


class NoJsonFound(ContractError):
    pass


class MalformedJson(ContractError):
    def __init__(self, position: int):
        super().__init__(f"unparseable JSON starting at offset {position}")
        self.position = position


class ContractViolation(ContractError):
    """Raised by parse-and-validate callables inside the repair loop."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations) or "contract violation")
        self.violations = list(violations)


class RepairExhausted(ContractError):
    def __init__(self, report: RepairReport):
        last = report.violations_per_attempt[-1] if report.violations_per_attempt else []
        super().__init__(
            f"agent reply still invalid after {report.attempts} attempts: {'; '.join(last)}"
        )
        self.report = report
        self.last_violations = last


class BackendTimeout(AdapterError):
    pass


class BackendHTTPError(AdapterError):
    def __init__(self, status: int, detail: str = ""):
        super().__init__(f"backend returned HTTP {status}" + (f": {detail}" if detail else ""))
        self.status = status


class TranscriptExhausted(AdapterError):
    pass


class TranscriptMismatch(AdapterError):
    def __init__(self, expected: str, prompt: str):
        super().__init__(
            f"scripted reply expected prompt containing {expected!r}; got: {prompt[:120]!r}..."
        )


@dataclass(frozen=True)
class BackendConfig:
    """Configuration for a chat-completion backend (live or mock)."""

    kind: str = "mock"
    endpoint: str = ""
    model_name: str = "mock-model"
    temperature: float = 0.0
    timeout: float = 60.0
    api_key_env: str = ""
    transcript_path: str = ""
    max_retries: int = 2
    retry_delay: float = 0.5

    def __post_init__(self):
        if self.kind not in ("live", "mock"):
            raise PreconditionError(f"backend kind must be live or mock, got {self.kind!r}")
        if self.kind == "live" and (not self.endpoint or not self.api_key_env):
            raise PreconditionError("live backend requires endpoint and api_key_env")
        if self.kind == "mock" and not self.transcript_path:
            raise PreconditionError("mock backend requires transcript_path")


def load_transcript(path: str | Path) -> list[dict]:
    """Load a scripted transcript: an ordered list of {match?, reply} objects."""
    with open(path, encoding="utf-8") as f:
        entries = json.load(f)
    if not isinstance(entries, list):
        raise PreconditionError(f"transcript {path} must be a JSON list")
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or "reply" not in entry:
            raise PreconditionError(f"transcript {path} entry {i} must carry a 'reply'")
    return entries


class MockChatBackend:
    """Replays scripted replies in order, optionally asserting prompt content."""

    def __init__(self, script: list[dict]):
        self.script = list(script)
        self.calls = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "MockChatBackend":
        return cls(load_transcript(path))

    def send(self, messages: list[tuple[str, str]]) -> str:
        if self.calls >= len(self.script):
            raise TranscriptExhausted(
                f"transcript exhausted after {len(self.script)} scripted replies"
            )
        entry = self.script[self.calls]
        self.calls += 1
        match = entry.get("match")
        if match:
            prompt = messages[-1][1] if messages else ""
            if match not in prompt:
                raise TranscriptMismatch(match, prompt)
        return entry["reply"]


class HttpChatBackend:
    """Adapter for an HTTP chat-completion endpoint with retries and a disk cache."""

    RETRYABLE = frozenset({429, 500, 502, 503, 504})

    def __init__(self, config: BackendConfig, cache_dir: str | Path | None = None):
        self.config = config
        self.cache_dir = Path(cache_dir) if cache_dir else None

    def _cache_path(self, messages) -> Path | None:
        if self.cache_dir is None:
            return None
        payload = json.dumps([self.config.model_name, messages], sort_keys=True)
        key = hashlib.sha256(payload.encode("utf-8")).hexdigest()
        return self.cache_dir / f"{key}.json"

    def send(self, messages: list[tuple[str, str]]) -> str:
        cache_path = self._cache_path(messages)
        if cache_path is not None and cache_path.exists():
            return json.loads(cache_path.read_text(encoding="utf-8"))["reply"]
        reply = self._request(messages)
        if cache_path is not None:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
            tmp = cache_path.with_suffix(".tmp")
            tmp.write_text(json.dumps({"reply": reply}), encoding="utf-8")
            os.replace(tmp, cache_path)
        return reply

    def _request(self, messages) -> str:
        api_key = os.environ.get(self.config.api_key_env, "")
        if not api_key:
            raise PreconditionError(
                f"environment variable {self.config.api_key_env} is not set"
            )
        body = json.dumps(
            {
                "model": self.config.model_name,
                "messages": [{"role": r, "content": c} for r, c in messages],
                "temperature": self.config.temperature,
            }
        ).encode("utf-8")
        last_error: AdapterError | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt and self.config.retry_delay:
                time.sleep(self.config.retry_delay)
            request = urllib.request.Request(
                self.config.endpoint,
                data=body,
                method="POST",
                headers={
                    "Content-Type": "application/json",
                    "Authorization": f"Bearer {api_key}",
                },
            )
            try:
                with urllib.request.urlopen(request, timeout=self.config.timeout) as resp:
                    data = json.loads(resp.read().decode("utf-8"))
                return data["choices"][0]["message"]["content"]
            except urllib.error.HTTPError as e:
                last_error = BackendHTTPError(e.code, e.reason or "")
                if e.code not in self.RETRYABLE:
                    raise last_error from None
            except TimeoutError:
                last_error = BackendTimeout(f"no response within {self.config.timeout}s")
            except urllib.error.URLError as e:
                if isinstance(e.reason, TimeoutError):
                    last_error = BackendTimeout(f"no response within {self.config.timeout}s")
                else:
                    last_error = BackendHTTPError(0, str(e.reason))
            except (KeyError, IndexError, ValueError) as e:
                raise BackendHTTPError(0, f"malformed completion response: {e}") from None
        raise last_error


def backend_from_config(config: BackendConfig, cache_dir=None):
    if config.kind == "mock":
        return MockChatBackend.from_file(config.transcript_path)
    return HttpChatBackend(config, cache_dir=cache_dir)


@dataclass
class ChatSession:
    """Append-only message history bound to a single backend.

    Sessions are single-owner: one session per agent role per run.
    """

    backend: object
    messages: list[tuple[str, str]] = field(default_factory=list)

    def append(self, role: str, content: str) -> None:
        if role not in ("system", "user", "assistant"):
            raise ValueError(f"unknown role {role!r}")
        if self.messages and role != "system" and self.messages[-1][0] == role:
            raise ValueError(f"two consecutive {role!r} messages")
        self.messages.append((role, content))


def complete(session: ChatSession, user_message: str) -> str:
    """Send a user message on the session and return the assistant reply verbatim."""
    session.append("user", user_message)
    reply = session.backend.send(session.messages)
    session.append("assistant", reply)
    return reply


def _scan_balanced(text: str, start: int) -> int | None:
    """Return end offset (exclusive) of a balanced JSON value starting at start."""
    pairs = {"{": "}", "[": "]"}
    stack = [pairs[text[start]]]
    in_string = False
    escaped = False
    i = start + 1
    while i < len(text):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
        elif ch == '"':
            in_string = True
        elif ch in pairs:
            stack.append(pairs[ch])
        elif ch in ("}", "]"):
            if ch != stack.pop():
                return None
            if not stack:
                return i + 1
        i += 1
    return None


def extract_json(raw: str):
    """Extract the first syntactically complete JSON object or array from a reply.

    Tolerates Markdown code fences and leading/trailing prose; string escapes
    are honored so braces inside strings never confuse the scan. Raises
    NoJsonFound when the reply has no JSON at all, MalformedJson(position)
    when opening delimiters never complete.
    """
    if not raw or not raw.strip():
        raise NoJsonFound("reply is empty")
    first_candidate = None
    i = 0
    while True:
        candidates = [p for p in (raw.find("{", i), raw.find("[", i)) if p != -1]
        if not candidates:
            break
        start = min(candidates)
        if first_candidate is None:
            first_candidate = start
        end = _scan_balanced(raw, start)
        if end is not None:
            try:
                return json.loads(raw[start:end])
            except ValueError:
                pass
        i = start + 1
    if first_candidate is None:
        raise NoJsonFound("reply contains no JSON object or array")
    raise MalformedJson(first_candidate)


def _repair_message(violations: list[str]) -> str:
    lines = "\n".join(f"- {v}" for v in violations)
    return (
        "The previous reply violated the required output contract:\n"
        f"{lines}\n"
        "Reply again with the complete, corrected JSON object. Output only the JSON."
    )


def repair_loop(session: ChatSession, prompt: PromptText | str, parse_and_validate,
                max_attempts: int = 3):
    """Run a validate-and-retry loop around one prompt.

    parse_and_validate takes the raw assistant text and either returns the
    validated value or raises ContractViolation with the violation messages.
    On failure the violations are sent back verbatim and the backend gets
    another try, up to max_attempts completions. Returns (value, RepairReport);
    raises RepairExhausted when every attempt fails.
    """
    if max_attempts < 1:
        raise PreconditionError("max_attempts must be at least 1")
    report = RepairReport()
    message = prompt.text if isinstance(prompt, PromptText) else prompt
    for attempt in range(1, max_attempts + 1):
        raw = complete(session, message)
        report.attempts = attempt
        try:
            value = parse_and_validate(raw)
        except ContractViolation as violation:
            report.violations_per_attempt.append(violation.violations)
            message = _repair_message(violation.violations)
            continue
        report.violations_per_attempt.append([])
        report.final_status = "ok"
        return value, report
    report.final_status = "exhausted"
    raise RepairExhausted(report)
