"""HTTP client for the Ollama API."""

from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Iterator, Sequence

import httpx

from .errors import (
    ProtocolError,
    RequestTimeout,
    Unreachable,
    from_server_error,
)
from .ndjson import NDJSONDecoder, event_from_object
from .types import (
    Base64Image,
    ChatMessage,
    ContentDelta,
    Done,
    GenerationOptions,
    ModelTag,
    PullProgress,
    Role,
    ServerConfig,
    StreamEvent,
)

log = logging.getLogger(__name__)

Sink = Callable[[StreamEvent], None]


@dataclass(frozen=True)
class ServerStatus:
    reachable: bool
    version: str | None = None


@dataclass(frozen=True)
class PullResult:
    model: ModelTag
    ok: bool


@dataclass(frozen=True)
class ModelInfo:
    model: ModelTag
    size_bytes: int
    modified_at: datetime | None


@dataclass(frozen=True)
class Completion:
    text: str
    stats: dict[str, Any] = field(default_factory=dict)


def _parse_timestamp(value: Any) -> datetime | None:
    if not isinstance(value, str):
        return None
    # Ollama emits nanosecond fractions, fromisoformat on 3.10 wants at most 6 digits
    head, dot, frac = value.partition(".")
    if dot:
        digits = len(frac) - len(frac.lstrip("0123456789"))
        frac = frac[:min(digits, 6)] + frac[digits:]
        value = f"{head}.{frac}"
    value = value.replace("Z", "+00:00")
    try:
        return datetime.fromisoformat(value)
    except ValueError:
        return None


def _error_message(response: httpx.Response) -> str:
    try:
        body = response.json()
    except ValueError:
        return response.text.strip() or response.reason_phrase
    if isinstance(body, dict) and "error" in body:
        return str(body["error"])
    return response.text.strip()


def _raise_for_status(response: httpx.Response) -> None:
    if response.is_success:
        return
    raise from_server_error(_error_message(response), response.status_code)


class OllamaClient:
    """Thin, thread-safe wrapper around the Ollama HTTP endpoints.

    One instance may be shared by many threads; every request keeps its own
    decoding state.
    """

    def __init__(self, config: ServerConfig | None = None, *, transport: httpx.BaseTransport | None = None):
        self.config = config or ServerConfig()
        self._http = httpx.Client(
            base_url=self.config.base_url,
            headers=dict(self.config.extra_headers),
            timeout=self.config.timeout,
            transport=transport,
        )

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> OllamaClient:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _model(self, model: ModelTag | str | None) -> ModelTag:
        return self.config.default_model if model is None else ModelTag.parse(model)

    @contextmanager
    def _translate_errors(self) -> Iterator[None]:
        try:
            yield
        except httpx.TimeoutException as exc:
            raise RequestTimeout(f"request to {self.config.base_url} timed out") from exc
        except (httpx.ConnectError, httpx.RemoteProtocolError) as exc:
            raise Unreachable(f"cannot reach {self.config.base_url}: {exc}") from exc
        except httpx.HTTPError as exc:
            raise Unreachable(f"transport failure talking to {self.config.base_url}: {exc}") from exc

    def _post_json(self, path: str, body: dict[str, Any]) -> dict[str, Any]:
        with self._translate_errors():
            response = self._http.post(path, json=body)
        _raise_for_status(response)
        try:
            data = response.json()
        except ValueError as exc:
            raise ProtocolError(f"{path} returned a non-JSON body: {response.text[:200]!r}") from exc
        if not isinstance(data, dict):
            raise ProtocolError(f"{path} returned {type(data).__name__}, expected an object")
        if "error" in data:
            raise from_server_error(str(data["error"]))
        return data

    def _stream(self, path: str, body: dict[str, Any], sink: Sink | None) -> list[StreamEvent]:
        """POST ``body`` and decode the NDJSON reply, forwarding events to ``sink``."""
        decoder = NDJSONDecoder()
        events: list[StreamEvent] = []

        def emit(batch: list[StreamEvent]) -> None:
            for event in batch:
                events.append(event)
                if sink is not None:
                    sink(event)

        with self._translate_errors():
            with self._http.stream("POST", path, json=body) as response:
                if not response.is_success:
                    response.read()
                    _raise_for_status(response)
                for chunk in response.iter_bytes():
                    emit(decoder.feed(chunk))
        emit(decoder.close())
        return events

    # endpoints

    def ping(self) -> ServerStatus:
        """Check whether the server answers ``GET /api/version``. Never raises."""
        try:
            response = self._http.get("/api/version", timeout=self.config.ping_timeout)
        except httpx.HTTPError as exc:
            log.debug("ping failed: %s", exc)
            return ServerStatus(False)
        if response.status_code != 200:
            return ServerStatus(False)
        try:
            version = response.json().get("version")
        except (ValueError, AttributeError):
            version = None
        return ServerStatus(True, version if isinstance(version, str) else None)

    def pull_model(self, model: ModelTag | str | None = None, progress: Sink | None = None) -> PullResult:
        tag = self._model(model)
        events = self._stream("/api/pull", {"name": str(tag), "stream": True}, progress)
        statuses = [e.status for e in events if isinstance(e, PullProgress)]
        return PullResult(tag, bool(statuses) and statuses[-1] == "success")

    def list_models(self) -> list[ModelInfo]:
        with self._translate_errors():
            response = self._http.get("/api/tags")
        _raise_for_status(response)
        try:
            entries = response.json()["models"]
            models = [
                ModelInfo(
                    ModelTag.parse(entry.get("name") or entry["model"]),
                    int(entry.get("size", 0)),
                    _parse_timestamp(entry.get("modified_at")),
                )
                for entry in entries
            ]
        except (ValueError, KeyError, TypeError) as exc:
            raise ProtocolError(f"malformed /api/tags reply: {response.text[:200]!r}") from exc
        return sorted(models, key=lambda m: m.model.canonical)

    def _complete(self, path: str, body: dict[str, Any], sink: Sink | None, stream: bool | None):
        stream = sink is not None if stream is None else stream
        body["stream"] = stream
        if stream:
            events = self._stream(path, body, sink)
        else:
            events = event_from_object(self._post_json(path, body))
        done = [e for e in events if isinstance(e, Done)]
        if len(done) != 1 or not isinstance(events[-1], Done):
            raise ProtocolError(f"{path} stream did not end with exactly one done record")
        deltas = [e for e in events if isinstance(e, ContentDelta)]
        return "".join(d.text for d in deltas), done[0].stats, deltas

    def generate(
        self,
        prompt: str,
        model: ModelTag | str | None = None,
        options: GenerationOptions | None = None,
        images: Sequence[Base64Image] = (),
        sink: Sink | None = None,
        *,
        system: str | None = None,
        stream: bool | None = None,
    ) -> Completion:
        """Single stateless completion via ``/api/generate``.

        Streams when a sink is given unless ``stream`` says otherwise; the
        returned text is the concatenation of every delta either way.
        """
        if not prompt:
            raise ValueError("prompt must be non-empty")
        body: dict[str, Any] = {"model": str(self._model(model)), "prompt": prompt}
        if system is not None:
            body["system"] = system
        if images:
            body["images"] = [img.data for img in images]
        if options is not None and options.to_dict():
            body["options"] = options.to_dict()
        text, stats, _ = self._complete("/api/generate", body, sink, stream)
        return Completion(text, stats)

    def chat_request(
        self,
        messages: Sequence[ChatMessage],
        model: ModelTag | str | None = None,
        options: GenerationOptions | None = None,
        sink: Sink | None = None,
        *,
        stream: bool | None = None,
    ) -> ChatMessage:
        if not messages:
            raise ValueError("messages must be non-empty")
        if messages[-1].role is not Role.USER:
            raise ValueError("the last message must have the user role")
        body: dict[str, Any] = {
            "model": str(self._model(model)),
            "messages": [m.to_wire() for m in messages],
        }
        if options is not None and options.to_dict():
            body["options"] = options.to_dict()
        text, stats, deltas = self._complete("/api/chat", body, sink, stream)
        roles = {d.role for d in deltas if d.role is not None}
        if "role" in stats:
            roles.add(stats["role"])
        if roles - {Role.ASSISTANT.value}:
            raise ProtocolError(f"expected an assistant reply, got roles {sorted(roles)}")
        return ChatMessage.assistant(text)

    def embed_request(self, text: str, model: ModelTag | str | None = None) -> list[float]:
        if not text:
            raise ValueError("text must be non-empty")
        data = self._post_json("/api/embeddings", {"model": str(self._model(model)), "prompt": text})
        vector = data.get("embedding")
        if not isinstance(vector, list) or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in vector
        ):
            raise ProtocolError("embedding reply is missing a numeric 'embedding' array")
        return [float(x) for x in vector]


def encode_image(source: str | Path, *, timeout: float = 30.0) -> Base64Image:
    """Read an image from a local path or an http(s) URL and base64-encode it."""
    text = str(source)
    if text.startswith(("http://", "https://")):
        try:
            response = httpx.get(text, timeout=timeout, follow_redirects=True)
            response.raise_for_status()
        except httpx.HTTPError as exc:
            raise OSError(f"cannot fetch image {text}: {exc}") from exc
        return Base64Image.from_bytes(response.content, text)
    return Base64Image.from_bytes(Path(text).read_bytes(), text)

