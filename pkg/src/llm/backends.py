"""
LLM completion backends: live HTTP, scripted cassette replay and a recording wrapper.

A cassette is a JSON-lines file of {template_id, turn, digest, attempt, response}
entries. The digest is the sha256 of the rendered prompt, so editing a
template makes stale recordings miss instead of replaying silently. `attempt`
counts re-asks of one prompt, so a recovered reply replays after the bad one.
"""

import hashlib
import json
import logging
import os
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from pathlib import Path

import requests

from src.errors import BackendError, CassetteMissError, ConfigError, DataError

logger = logging.getLogger(__name__)

ENDPOINT_ENV = "SUMMARIZER_ENDPOINT"
AUTH_TOKEN_ENV = "SUMMARIZER_AUTH_TOKEN"
DEFAULT_TEMPERATURE = 0.8


@dataclass(frozen=True)
class LlmRequest:
    prompt: str
    temperature: float = DEFAULT_TEMPERATURE
    template_id: str = ""
    turn: int = 0
    attempt: int = 0

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ConfigError(f"Temperature must lie in [0, 2], got {self.temperature}")
        # PromptId values are str enums; keep the plain string in cassette keys
        object.__setattr__(self, "template_id", str(getattr(self.template_id, "value", self.template_id)))

    @property
    def digest(self):
        return prompt_digest(self.prompt)

    @property
    def key(self):
        return (self.template_id, self.turn, self.digest, self.attempt)

    def retry(self, attempt):
        return replace(self, attempt=attempt)


@dataclass(frozen=True)
class LlmResponse:
    text: str
    meta: dict = field(default_factory=dict)


def prompt_digest(prompt):
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class LlmBackend(ABC):
    """Anything that turns an LlmRequest into an LlmResponse."""

    name = "abstract"

    @abstractmethod
    def complete(self, request):
        """
        Args:
            request (LlmRequest): Rendered prompt plus cassette key parts

        Returns:
            LlmResponse: The completion text
        """


def complete(backend, request):
    """Issues one request through a backend, logging the call."""
    logger.debug(
        "LLM call via %s: template=%s turn=%d digest=%s",
        backend.name, request.template_id, request.turn, request.digest[:12],
    )
    return backend.complete(request)


#####################################################
# HTTP
#####################################################

class HttpBackend(LlmBackend):
    """POSTs {"prompt", "temperature"} and reads the `text` field of the JSON reply."""

    name = "http"

    def __init__(self, endpoint, auth_token=None, timeout=120.0):
        if not endpoint:
            raise ConfigError(f"HTTP backend needs an endpoint (flag --endpoint or ${ENDPOINT_ENV})")
        self.endpoint = endpoint
        self.auth_token = auth_token
        self.timeout = timeout

    def _headers(self):
        headers = {"Content-Type": "application/json"}
        if self.auth_token:
            headers["Authorization"] = f"Bearer {self.auth_token}"
        return headers

    def complete(self, request):
        payload = {"prompt": request.prompt, "temperature": request.temperature}
        try:
            reply = requests.post(self.endpoint, json=payload, headers=self._headers(), timeout=self.timeout)
            reply.raise_for_status()
        except requests.RequestException as exc:
            raise BackendError(f"Request to {self.endpoint} failed: {exc}") from exc
        try:
            body = reply.json()
        except ValueError:
            raise BackendError(f"Endpoint {self.endpoint} did not return JSON") from None
        text = body.get("text") if isinstance(body, dict) else None
        if not isinstance(text, str):
            raise BackendError(f"Endpoint {self.endpoint} reply has no string 'text' field")
        return LlmResponse(text, {"backend": self.name, "status": reply.status_code})


#####################################################
# CASSETTES
#####################################################

@dataclass(frozen=True)
class CassetteEntry:
    template_id: str
    turn: int
    digest: str
    response: str
    attempt: int = 0

    @property
    def key(self):
        return (self.template_id, self.turn, self.digest, self.attempt)

    def to_line(self):
        return json.dumps(
            {
                "template_id": self.template_id,
                "turn": self.turn,
                "digest": self.digest,
                "attempt": self.attempt,
                "response": self.response,
            },
            ensure_ascii=False,
            sort_keys=True,
        )


class Cassette:
    """In-memory view of a cassette file; keys are unique."""

    def __init__(self, path=None, entries=()):
        self.path = Path(path) if path is not None else None
        self._responses = {}
        for entry in entries:
            self.add(entry)

    @classmethod
    def load(cls, path):
        """
        Reads a cassette file.

        Args:
            path (str | Path): JSON-lines cassette

        Returns:
            Cassette: Entries keyed by (template id, turn, digest, attempt)

        Raises:
            ConfigError: When the file does not exist
            DataError: When a line is not a cassette entry
        """
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"Cassette file not found: {path}")
        cassette = cls(path)
        for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                entry = CassetteEntry(
                    str(obj["template_id"]),
                    int(obj["turn"]),
                    str(obj["digest"]),
                    str(obj["response"]),
                    int(obj.get("attempt", 0)),
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise DataError(f"Invalid cassette entry at {path}:{number}: {exc}") from None
            cassette.add(entry)
        logger.debug("Loaded %d cassette entries from %s", len(cassette), path)
        return cassette

    def add(self, entry):
        known = self._responses.get(entry.key)
        if known is not None and known != entry.response:
            raise DataError(f"Conflicting cassette entries for template '{entry.template_id}' turn {entry.turn}")
        self._responses[entry.key] = entry.response

    def lookup(self, key):
        return self._responses.get(key)

    def __contains__(self, key):
        return key in self._responses

    def __len__(self):
        return len(self._responses)

    def entries(self):
        return [CassetteEntry(t, n, d, r, a) for (t, n, d, a), r in self._responses.items()]


class ScriptedBackend(LlmBackend):
    """Replays a cassette; identical requests always get identical replies."""

    name = "scripted"

    def __init__(self, cassette):
        self.cassette = cassette

    def complete(self, request):
        text = self.cassette.lookup(request.key)
        if text is None:
            raise CassetteMissError(request.template_id, request.turn, request.digest, request.attempt)
        return LlmResponse(text, {"backend": self.name, "digest": request.digest})


class RecorderBackend(LlmBackend):
    """Delegates to an inner backend and appends every new exchange to a cassette file."""

    name = "record"

    def __init__(self, inner, path):
        self.inner = inner
        self.path = Path(path)
        self.cassette = Cassette.load(self.path) if self.path.is_file() else Cassette(self.path)
        self._lock = threading.Lock()

    def complete(self, request):
        response = self.inner.complete(request)
        entry = CassetteEntry(request.template_id, request.turn, request.digest, response.text, request.attempt)
        with self._lock:
            if entry.key in self.cassette:
                logger.warning(
                    "Cassette already holds template '%s' turn %d; keeping the first recording",
                    entry.template_id, entry.turn,
                )
            else:
                self.cassette.add(entry)
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as handle:
                    handle.write(entry.to_line() + "\n")
        return response


#####################################################
# CONSTRUCTION
#####################################################

def build_backend(spec, endpoint=None, auth_token=None, timeout=120.0):
    """
    Builds a backend from its command-line spec.

    Args:
        spec (str): "http:<url>", "scripted:<cassette>" or "record:<cassette>"
        endpoint (str): Endpoint for record mode; falls back to $SUMMARIZER_ENDPOINT
        auth_token (str): Bearer token; falls back to $SUMMARIZER_AUTH_TOKEN
        timeout (float): HTTP timeout in seconds

    Returns:
        LlmBackend: The configured backend

    Raises:
        ConfigError: Unknown scheme, missing cassette or missing endpoint
    """
    scheme, sep, target = (spec or "").partition(":")
    if not sep or not target:
        raise ConfigError(f"Backend spec must look like http:<url>, scripted:<file> or record:<file>, got {spec!r}")
    token = auth_token or os.environ.get(AUTH_TOKEN_ENV)
    if scheme == "http":
        return HttpBackend(target, token, timeout)
    if scheme == "scripted":
        return ScriptedBackend(Cassette.load(target))
    if scheme == "record":
        url = endpoint or os.environ.get(ENDPOINT_ENV)
        return RecorderBackend(HttpBackend(url, token, timeout), target)
    raise ConfigError(f"Unknown backend scheme '{scheme}'")
