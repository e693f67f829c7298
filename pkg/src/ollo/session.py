"""Conversations that remember their history, on top of the stateless client."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import IO, Iterable, Sequence

from .errors import ProtocolError
from .transport import OllamaClient, Sink
from .types import Base64Image, ChatMessage, GenerationOptions, ModelTag, Role


@dataclass(frozen=True)
class ChatSession:
    """Immutable snapshot of a conversation.

    The system prompt is kept apart from ``history`` and prepended on every
    request, so :func:`reset` can drop the turns and keep the instructions.
    """

    model: ModelTag
    system_prompt: str | None = None
    history: tuple[ChatMessage, ...] = ()
    options: GenerationOptions = GenerationOptions()

    def __post_init__(self) -> None:
        object.__setattr__(self, "model", ModelTag.parse(self.model))
        object.__setattr__(self, "history", tuple(self.history))
        check_alternation(self.history)

    def request_messages(self, user: ChatMessage | None = None) -> list[ChatMessage]:
        messages = [ChatMessage.system(self.system_prompt)] if self.system_prompt is not None else []
        messages.extend(self.history)
        if user is not None:
            messages.append(user)
        return messages


def check_alternation(history: Sequence[ChatMessage]) -> None:
    turns = list(history)
    if turns and turns[0].role is Role.SYSTEM:
        turns = turns[1:]
    for i, message in enumerate(turns):
        expected = Role.USER if i % 2 == 0 else Role.ASSISTANT
        if message.role is not expected:
            raise ValueError(f"history position {i} is {message.role.value}, expected {expected.value}")


def new_session(
    model: ModelTag | str,
    system_prompt: str | None = None,
    options: GenerationOptions | None = None,
) -> ChatSession:
    return ChatSession(ModelTag.parse(model), system_prompt, (), options or GenerationOptions())


def chat(
    client: OllamaClient,
    session: ChatSession,
    user_text: str,
    images: Iterable[Base64Image] = (),
    sink: Sink | None = None,
) -> tuple[str, ChatSession]:
    """Send one user turn with the full history; return the reply and the extended session.

    On any error the caller's session is untouched, since nothing is appended
    until the reply has arrived.
    """
    if not user_text:
        raise ValueError("user_text must be non-empty")
    user = ChatMessage.user(user_text, tuple(images))
    reply = client.chat_request(session.request_messages(user), session.model, session.options, sink)
    return reply.content, replace(session, history=session.history + (user, reply))


def reset(session: ChatSession) -> ChatSession:
    return replace(session, history=())


# transcripts


def _image_to_json(image: Base64Image) -> dict[str, str]:
    return {"data": image.data, "source": image.source}


def dump_transcript(session: ChatSession, fp: IO[str]) -> None:
    header = {"model": str(session.model), "options": session.options.to_dict()}
    if session.system_prompt is not None:
        header["system"] = session.system_prompt
    fp.write(json.dumps(header, ensure_ascii=False) + "\n")
    for message in session.history:
        line: dict = {"role": message.role.value, "content": message.content}
        if message.images:
            line["images"] = [_image_to_json(img) for img in message.images]
        fp.write(json.dumps(line, ensure_ascii=False) + "\n")


def save_transcript(session: ChatSession, destination: str | Path) -> None:
    with open(destination, "w", encoding="utf-8") as fp:
        dump_transcript(session, fp)


def parse_transcript(lines: Iterable[str]) -> ChatSession:
    rows = []
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"transcript line {n} is not valid JSON: {line.strip()[:80]!r}") from exc
    if not rows or not isinstance(rows[0], dict) or "model" not in rows[0]:
        raise ProtocolError("transcript is missing its header line")
    header, body = rows[0], rows[1:]
    try:
        history = tuple(
            ChatMessage(
                row["role"],
                row["content"],
                tuple(Base64Image(img["data"], img.get("source", "")) for img in row.get("images", ())),
            )
            for row in body
        )
        return ChatSession(
            ModelTag.parse(header["model"]),
            header.get("system"),
            history,
            GenerationOptions.from_dict(header.get("options")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed transcript: {exc}") from exc


def load_transcript(source: str | Path) -> ChatSession:
    with open(source, encoding="utf-8") as fp:
        return parse_transcript(fp)
