"""Incremental decoding of Ollama's newline-delimited JSON streams."""

from __future__ import annotations

import json
from typing import Any, Iterable, Iterator

from .errors import ProtocolError, from_server_error
from .types import ContentDelta, Done, PullProgress, StreamEvent

_CONTENT_KEYS = ("response", "message", "done", "status", "error")


def event_from_object(obj: Any, line: str = "") -> list[StreamEvent]:
    """Turn one decoded JSON object into zero or more events.

    A terminal record that still carries text (non-streamed replies do)
    yields a ContentDelta before its Done.
    """
    if not isinstance(obj, dict):
        raise ProtocolError(f"expected a JSON object, got: {line or obj!r}")
    if "error" in obj:
        raise from_server_error(str(obj["error"]))

    text, role = None, None
    if "response" in obj:
        text = obj["response"]
    elif "message" in obj:
        message = obj["message"]
        if not isinstance(message, dict) or "content" not in message:
            raise ProtocolError(f"message without content: {line or obj!r}")
        text, role = message["content"], message.get("role")
    if text is not None and not isinstance(text, str):
        raise ProtocolError(f"non-string content: {line or obj!r}")

    if obj.get("done") is True:
        events: list[StreamEvent] = []
        if text:
            events.append(ContentDelta(text, role))
        stats = {k: v for k, v in obj.items() if k not in ("response", "message", "done")}
        if role is not None:
            stats["role"] = role
        events.append(Done(stats))
        return events
    if text is not None:
        return [ContentDelta(text, role)]
    if "status" in obj:
        return [PullProgress(str(obj["status"]), obj.get("completed"), obj.get("total"))]
    raise ProtocolError(f"stream line lacks any of {', '.join(_CONTENT_KEYS)}: {line}")


def _decode_line(raw: bytes) -> list[StreamEvent]:
    try:
        line = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ProtocolError(f"stream line is not valid UTF-8: {raw!r}") from exc
    if not line.strip():
        return []
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"invalid JSON line: {line!r}") from exc
    return event_from_object(obj, line)


class NDJSONDecoder:
    """Feed raw byte chunks, get events back as lines complete.

    Lines are split on the raw ``\\n`` byte, which never occurs inside a
    multi-byte UTF-8 sequence, so chunk boundaries may fall anywhere.
    """

    def __init__(self) -> None:
        self._pending = bytearray()

    def feed(self, chunk: bytes) -> list[StreamEvent]:
        self._pending += chunk
        if b"\n" not in chunk:
            return []
        *lines, rest = bytes(self._pending).split(b"\n")
        self._pending = bytearray(rest)
        events: list[StreamEvent] = []
        for line in lines:
            events.extend(_decode_line(line))
        return events

    def close(self) -> list[StreamEvent]:
        """Flush an unterminated final line, if any."""
        rest, self._pending = bytes(self._pending), bytearray()
        return _decode_line(rest)


def decode_ndjson(chunks: Iterable[bytes]) -> Iterator[StreamEvent]:
    decoder = NDJSONDecoder()
    for chunk in chunks:
        yield from decoder.feed(chunk)
    yield from decoder.close()
