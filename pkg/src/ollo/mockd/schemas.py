from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field


class _Request(BaseModel):
    model_config = ConfigDict(extra="allow")


class PullRequest(_Request):
    name: Optional[str] = None
    model: Optional[str] = None
    stream: bool = True


class GenerateRequest(_Request):
    model: str
    prompt: str = ""
    system: Optional[str] = None
    images: list[str] = Field(default_factory=list)
    options: dict[str, Any] = Field(default_factory=dict)
    stream: bool = True


class Message(BaseModel):
    role: Literal["system", "user", "assistant", "tool"]
    content: str = ""
    images: Optional[list[str]] = None


class ChatRequest(_Request):
    model: str
    messages: list[Message]
    options: dict[str, Any] = Field(default_factory=dict)
    stream: bool = True


class EmbeddingsRequest(_Request):
    model: str
    prompt: str


class EmbeddingsResponse(BaseModel):
    embedding: list[float]


class VersionResponse(BaseModel):
    version: str


class ModelEntry(BaseModel):
    name: str
    model: str
    modified_at: str
    size: int
    digest: str


class TagsResponse(BaseModel):
    models: list[ModelEntry]


class CaptureEntry(BaseModel):
    seq: int
    method: str
    path: str
    body: str
