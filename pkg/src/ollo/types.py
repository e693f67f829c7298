"""Value types shared by the client, the session layer and the mock server."""

from __future__ import annotations

import base64
import enum
import os
from dataclasses import dataclass, field
from typing import Any, Mapping, Union
from urllib.parse import urlsplit

DEFAULT_HOST = "http://localhost:11434"
DEFAULT_MODEL = "llama2"
HOST_ENV = "OLLO_HOST"
MODEL_ENV = "OLLO_MODEL"


@dataclass(frozen=True)
class ModelTag:
    """A model reference such as ``llava`` or ``gemma:2b-instruct-q4_0``.

    ``variant`` keeps whether the tag was spelled out so that rendering gives
    back exactly what was parsed; :attr:`tag` applies the ``latest`` default.
    """

    name: str
    variant: str | None = None

    def __post_init__(self) -> None:
        if not self.name or ":" in self.name.rsplit("/", 1)[-1]:
            raise ValueError(f"invalid model name: {self.name!r}")
        if self.variant is not None and (not self.variant or ":" in self.variant):
            raise ValueError(f"invalid model tag: {self.variant!r}")

    @classmethod
    def parse(cls, value: str | ModelTag) -> ModelTag:
        if isinstance(value, ModelTag):
            return value
        value = value.strip()
        # a colon before the last "/" belongs to a registry host:port
        head, slash, last = value.rpartition("/")
        if ":" in last:
            name, _, variant = last.partition(":")
            return cls(head + slash + name, variant)
        return cls(value)

    @property
    def tag(self) -> str:
        return self.variant or "latest"

    @property
    def canonical(self) -> str:
        return f"{self.name}:{self.tag}"

    def same_model(self, other: ModelTag | str) -> bool:
        return self.canonical == ModelTag.parse(other).canonical

    def __str__(self) -> str:
        return self.name if self.variant is None else f"{self.name}:{self.variant}"


Scalar = Union[int, float, bool, str]


@dataclass(frozen=True)
class GenerationOptions:
    """Per-request decoding options; unset fields are left out of the wire form."""

    seed: int | None = None
    temperature: float | None = None
    extras: Mapping[str, Scalar] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.seed is not None and (isinstance(self.seed, bool) or not isinstance(self.seed, int)):
            raise TypeError(f"seed must be an integer, got {self.seed!r}")
        if self.temperature is not None:
            if isinstance(self.temperature, bool) or not isinstance(self.temperature, (int, float)):
                raise TypeError(f"temperature must be a number, got {self.temperature!r}")
            if not self.temperature >= 0:
                raise ValueError(f"temperature must be >= 0, got {self.temperature}")
            object.__setattr__(self, "temperature", float(self.temperature))
        for key, value in self.extras.items():
            if key in ("seed", "temperature"):
                raise ValueError(f"{key!r} is a named field, not an extra option")
            if not isinstance(value, (int, float, bool, str)):
                raise TypeError(f"option {key!r} must be a scalar, got {type(value).__name__}")
        object.__setattr__(self, "extras", dict(self.extras))

    def to_dict(self) -> dict[str, Scalar]:
        out: dict[str, Scalar] = {}
        if self.seed is not None:
            out["seed"] = self.seed
        if self.temperature is not None:
            out["temperature"] = self.temperature
        out.update(self.extras)
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any] | None) -> GenerationOptions:
        data = dict(data or {})
        seed = data.pop("seed", None)
        temperature = data.pop("temperature", None)
        return cls(seed=seed, temperature=temperature, extras=data)

    @property
    def reproducible(self) -> bool:
        return self.seed is not None and self.temperature == 0


@dataclass(frozen=True)
class Base64Image:
    data: str
    source: str = ""

    @classmethod
    def from_bytes(cls, raw: bytes, source: str = "") -> Base64Image:
        return cls(base64.b64encode(raw).decode("ascii"), source)

    def decode(self) -> bytes:
        return base64.b64decode(self.data, validate=True)


class Role(str, enum.Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class ChatMessage:
    role: Role
    content: str
    images: tuple[Base64Image, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "role", Role(self.role))
        object.__setattr__(self, "images", tuple(self.images))
        if self.images and self.role is not Role.USER:
            raise ValueError("images may only be attached to user messages")

    def to_wire(self) -> dict[str, Any]:
        out: dict[str, Any] = {"role": self.role.value, "content": self.content}
        if self.images:
            out["images"] = [img.data for img in self.images]
        return out

    @classmethod
    def system(cls, content: str) -> ChatMessage:
        return cls(Role.SYSTEM, content)

    @classmethod
    def user(cls, content: str, images=()) -> ChatMessage:
        return cls(Role.USER, content, tuple(images))

    @classmethod
    def assistant(cls, content: str) -> ChatMessage:
        return cls(Role.ASSISTANT, content)


# streaming events


@dataclass(frozen=True)
class ContentDelta:
    text: str
    role: str | None = None


@dataclass(frozen=True)
class Done:
    stats: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class PullProgress:
    status: str
    completed: int | None = None
    total: int | None = None


StreamEvent = Union[ContentDelta, Done, PullProgress]


def _check_base_url(url: str) -> str:
    parts = urlsplit(url)
    if parts.scheme not in ("http", "https") or not parts.hostname:
        raise ValueError(f"base_url must be an absolute http(s) URL, got {url!r}")
    if parts.path not in ("", "/") or parts.query or parts.fragment:
        raise ValueError(f"base_url must not carry a path, query or fragment: {url!r}")
    parts.port  # raises ValueError on a malformed port
    return f"{parts.scheme}://{parts.netloc}"


@dataclass(frozen=True)
class ServerConfig:
    """Where to find the server and how long to wait for it."""

    base_url: str = DEFAULT_HOST
    timeout: int = 120
    extra_headers: Mapping[str, str] = field(default_factory=dict)
    default_model: ModelTag = ModelTag(DEFAULT_MODEL)
    ping_timeout: int = 5

    def __post_init__(self) -> None:
        object.__setattr__(self, "base_url", _check_base_url(self.base_url))
        for name in ("timeout", "ping_timeout"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ValueError(f"{name} must be an integer >= 1, got {value!r}")
        object.__setattr__(self, "default_model", ModelTag.parse(self.default_model))
        object.__setattr__(self, "extra_headers", dict(self.extra_headers))

    @classmethod
    def from_env(cls, **overrides: Any) -> ServerConfig:
        """Build a config from OLLO_HOST / OLLO_MODEL; explicit overrides win."""
        overrides = {k: v for k, v in overrides.items() if v is not None}
        overrides.setdefault("base_url", os.environ.get(HOST_ENV) or DEFAULT_HOST)
        overrides.setdefault("default_model", os.environ.get(MODEL_ENV) or DEFAULT_MODEL)
        return cls(**overrides)
