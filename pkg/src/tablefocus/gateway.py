"""Single seam to language models.

Holds the prompt template registry, request/response types, structured-output
parsers, and the backends: an OpenAI-compatible HTTP provider and a
record/replay cassette that makes every pipeline path deterministic under test.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol

TEMPLATE_IDS = (
    "structure_extraction",
    "column_ranking",
    "column_lookup",
    "row_lookup_sql",
    "verbalization",
    "information_estimation",
    "strategy_assessment",
    "textual_reasoning",
    "textual_guidance",
    "symbolic_reasoning",
    "answer_formatting",
)

_PLACEHOLDER_RE = re.compile(r"\{\{([a-zA-Z_][a-zA-Z0-9_]*)\}\}")


class GatewayError(Exception):
    """Base class for gateway failures."""


class MissingBinding(GatewayError):
    pass


class UnknownBinding(GatewayError):
    pass


class UnparseableReply(GatewayError):
    """A structured-output parser found no usable signal in the reply."""

    def __init__(self, message: str, raw_reply: str = ""):
        super().__init__(message)
        self.raw_reply = raw_reply


class EmptyList(UnparseableReply):
    pass


class CassetteMiss(GatewayError):
    pass


class TransportError(GatewayError):
    pass


class ProviderError(GatewayError):
    def __init__(self, status: int, body: str):
        super().__init__(f"provider returned HTTP {status}: {body[:500]}")
        self.status = status
        self.body = body


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    body: str
    required_bindings: frozenset[str]

    def __post_init__(self) -> None:
        found = frozenset(_PLACEHOLDER_RE.findall(self.body))
        if found != self.required_bindings:
            raise ValueError(
                f"template {self.id}: placeholders {sorted(found)} do not match "
                f"required bindings {sorted(self.required_bindings)}"
            )

    @classmethod
    def from_body(cls, template_id: str, body: str) -> "PromptTemplate":
        return cls(id=template_id, body=body, required_bindings=frozenset(_PLACEHOLDER_RE.findall(body)))


@dataclass(frozen=True)
class LmRequest:
    template_id: str
    bindings: tuple[tuple[str, str], ...]
    rendered: str
    temperature: float = 0.0
    max_tokens: int = 2048


@dataclass(frozen=True)
class LmResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    backend_id: str = ""

    def __post_init__(self) -> None:
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be non-negative")


def render_prompt(template: PromptTemplate, bindings: Mapping[str, str]) -> str:
    """Substitute every placeholder; binding keys must match exactly."""
    keys = set(bindings)
    missing = template.required_bindings - keys
    if missing:
        raise MissingBinding(f"template {template.id}: missing bindings {sorted(missing)}")
    extra = keys - template.required_bindings
    if extra:
        raise UnknownBinding(f"template {template.id}: unknown bindings {sorted(extra)}")
    return _PLACEHOLDER_RE.sub(lambda m: str(bindings[m.group(1)]), template.body)


def request_key(request: LmRequest) -> str:
    """Stable 256-bit cassette key over (template_id, rendered text)."""
    digest = hashlib.sha256()
    digest.update(request.template_id.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(request.rendered.encode("utf-8"))
    return digest.hexdigest()


class Backend(Protocol):
    def send(self, request: LmRequest) -> LmResponse: ...


class HttpBackend:
    """OpenAI-compatible chat-completions provider."""

    def __init__(self, base_url: str, model: str, api_key_env: str = "TF_API_KEY", timeout: float = 120.0):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout

    def send(self, request: LmRequest) -> LmResponse:
        import requests

        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.rendered}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        try:
            resp = requests.post(
                f"{self.base_url}/chat/completions", json=payload, headers=headers, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code // 100 != 2:
            raise ProviderError(resp.status_code, resp.text)
        data = resp.json()
        usage = data.get("usage", {})
        return LmResponse(
            text=data["choices"][0]["message"]["content"],
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
            backend_id=f"http:{self.model}",
        )


class ScriptedBackend:
    """Test backend: per-template queues of canned replies, popped in order."""

    def __init__(self, replies: Mapping[str, Iterable[str]]):
        self._queues = {tid: list(items) for tid, items in replies.items()}

    def send(self, request: LmRequest) -> LmResponse:
        queue = self._queues.get(request.template_id)
        if not queue:
            raise TransportError(f"no scripted reply for template {request.template_id}")
        return LmResponse(text=queue.pop(0), backend_id="scripted")


class Cassette:
    """Directory-of-JSON record/replay store keyed by the stable request hash.

    In replay mode no network backend is ever contacted; writes in record mode
    are serialized by an internal lock.
    """

    MODES = ("record", "replay", "passthrough")

    def __init__(self, path: str | Path, mode: str, inner: Backend | None = None):
        if mode not in self.MODES:
            raise ValueError(f"unknown cassette mode: {mode!r}")
        if mode in ("record", "passthrough") and inner is None:
            raise ValueError(f"{mode} mode requires an inner backend")
        self.path = Path(path)
        self.mode = mode
        self.inner = inner
        self._lock = threading.Lock()
        if mode == "record":
            self.path.mkdir(parents=True, exist_ok=True)

    def _entry_path(self, key: str) -> Path:
        return self.path / f"{key}.json"

    def lookup(self, key: str) -> LmResponse | None:
        entry = self._entry_path(key)
        if not entry.is_file():
            return None
        data = json.loads(entry.read_text(encoding="utf-8"))
        resp = data["response"]
        return LmResponse(
            text=resp["text"],
            prompt_tokens=resp.get("prompt_tokens", 0),
            completion_tokens=resp.get("completion_tokens", 0),
            backend_id=resp.get("backend_id", "cassette"),
        )

    def store(self, request: LmRequest, response: LmResponse) -> None:
        entry = {
            "request": {
                "template_id": request.template_id,
                "rendered": request.rendered,
                "temperature": request.temperature,
                "max_tokens": request.max_tokens,
            },
            "response": {
                "text": response.text,
                "prompt_tokens": response.prompt_tokens,
                "completion_tokens": response.completion_tokens,
                "backend_id": response.backend_id,
            },
        }
        with self._lock:
            self._entry_path(request_key(request)).write_text(
                json.dumps(entry, indent=2, ensure_ascii=False), encoding="utf-8"
            )

    def keys(self) -> list[str]:
        if not self.path.is_dir():
            return []
        return sorted(p.stem for p in self.path.glob("*.json"))

    def send(self, request: LmRequest) -> LmResponse:
        key = request_key(request)
        if self.mode == "replay":
            hit = self.lookup(key)
            if hit is None:
                raise CassetteMiss(f"no cassette entry for {request.template_id} ({key})")
            return hit
        if self.mode == "record":
            hit = self.lookup(key)
            if hit is not None:
                return hit
            assert self.inner is not None
            response = self.inner.send(request)
            self.store(request, response)
            return response
        assert self.inner is not None
        return self.inner.send(request)


def load_templates(directory: str | Path | None = None) -> dict[str, PromptTemplate]:
    """Load one plain-text template file per id, defaulting to the bundled set."""
    if directory is None:
        directory = Path(__file__).parent / "templates"
    directory = Path(directory)
    registry: dict[str, PromptTemplate] = {}
    for template_id in TEMPLATE_IDS:
        path = directory / f"{template_id}.txt"
        if not path.is_file():
            raise FileNotFoundError(f"missing prompt template file: {path}")
        registry[template_id] = PromptTemplate.from_body(template_id, path.read_text(encoding="utf-8"))
    return registry


class Gateway:
    """Template registry plus a backend; the one object pipeline stages call."""

    def __init__(
        self,
        backend: Backend,
        templates: Mapping[str, PromptTemplate] | None = None,
        temperature: float = 0.0,
        max_tokens: int = 2048,
    ):
        self.backend = backend
        self.templates = dict(templates) if templates is not None else load_templates()
        self.temperature = temperature
        self.max_tokens = max_tokens

    def build_request(self, template_id: str, bindings: Mapping[str, str]) -> LmRequest:
        template = self.templates[template_id]
        rendered = render_prompt(template, bindings)
        return LmRequest(
            template_id=template_id,
            bindings=tuple(sorted((k, str(v)) for k, v in bindings.items())),
            rendered=rendered,
            temperature=self.temperature,
            max_tokens=self.max_tokens,
        )

    def complete(self, template_id: str, bindings: Mapping[str, str]) -> tuple[LmRequest, LmResponse]:
        request = self.build_request(template_id, bindings)
        return request, self.backend.send(request)


def complete(request: LmRequest, backend: Backend) -> LmResponse:
    """Send one prepared request through a backend handle."""
    return backend.send(request)


_AFFIRM = ("yes", "true", "sufficient")
_NEGATE = ("no", "false", "insufficient")


def parse_bool(reply: str) -> bool:
    """Scan for the leading affirmation or negation token, case-insensitively."""
    for token in re.findall(r"[a-zA-Z]+", reply):
        lowered = token.lower()
        if lowered in _AFFIRM:
            return True
        if lowered in _NEGATE:
            return False
    raise UnparseableReply(f"no yes/no polarity found in reply: {reply[:200]!r}", raw_reply=reply)


def parse_choice(
    reply: str,
    options: list[str],
    synonyms: Mapping[str, str] | None = None,
) -> str:
    """Return the first option whose label (or declared synonym) appears in the reply."""
    if len(options) < 2:
        raise ValueError("parse_choice requires at least two options")
    lowered = reply.lower()
    for option in options:
        if option.lower() in lowered:
            return option
    if synonyms:
        for alias, option in synonyms.items():
            if option in options and alias.lower() in lowered:
                return option
    raise UnparseableReply(f"none of {options} found in reply: {reply[:200]!r}", raw_reply=reply)


def parse_delimited_list(
    reply: str,
    expected_universe: Iterable[str] | None = None,
) -> tuple[list[str], list[str]]:
    """Split a reply on newlines/commas/pipes into trimmed items.

    With a universe given, items outside it are dropped and reported (second
    element of the result); kept items carry the universe's canonical casing.
    """
    items = [part.strip() for part in re.split(r"[\n,|]+", reply)]
    items = [re.sub(r"^\s*(?:[-*•]|\d+[.)])\s*", "", item).strip() for item in items]
    items = [item for item in items if item]
    if not items:
        raise EmptyList(f"no list items found in reply: {reply[:200]!r}", raw_reply=reply)
    if expected_universe is None:
        return items, []
    canonical = {u.lower(): u for u in expected_universe}
    kept: list[str] = []
    dropped: list[str] = []
    for item in items:
        match = canonical.get(item.lower())
        if match is None:
            dropped.append(item)
        else:
            kept.append(match)
    if not kept:
        raise EmptyList(f"no list items inside the expected universe: {reply[:200]!r}", raw_reply=reply)
    return kept, dropped


_FENCE_RE = re.compile(r"```(.*?)```", re.DOTALL)
_FENCE_TAG_RE = re.compile(r"[ \t]*[a-zA-Z0-9_+-]*[ \t]*")


def extract_code_block(reply: str) -> str:
    """Content of the first triple-backtick fence, or the whole reply if unfenced."""
    match = _FENCE_RE.search(reply)
    if not match:
        return reply
    inner = match.group(1)
    if "\n" in inner:
        first, rest = inner.split("\n", 1)
        if _FENCE_TAG_RE.fullmatch(first):
            inner = rest
    return inner.strip("\n")
