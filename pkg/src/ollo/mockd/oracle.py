"""Pure functions that decide what the mock server answers.

Everything here is deterministic given its inputs (plus an explicit nonce),
so tests can compute expected replies without a running server.
"""

from __future__ import annotations

import enum
import json
import re
import secrets
import struct
import zlib
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from ..types import ModelTag

MOCK_VERSION = "0.0.0-mock"

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = (1 << 64) - 1

# public model-card dimensions for the models we care about; anything else
# pulled at runtime falls back to FALLBACK_DIMENSION
DIMENSION_TABLE = {
    "nomic-embed-text:latest": 768,
    "all-minilm:latest": 384,
    "llama2:latest": 4096,
}
FALLBACK_DIMENSION = 4096

DEFAULT_KEYWORDS = {
    "terrible": "negative",
    "awful": "negative",
    "horrible": "negative",
    "bad": "negative",
    "great": "positive",
    "delicious": "positive",
    "excellent": "positive",
    "love": "positive",
    "okay": "neutral",
    "average": "neutral",
}


def _tiny_png() -> bytes:
    def chunk(kind: bytes, data: bytes) -> bytes:
        return struct.pack(">I", len(data)) + kind + data + struct.pack(">I", zlib.crc32(kind + data))

    header = struct.pack(">IIBBBBB", 1, 1, 8, 6, 0, 0, 0)
    pixels = zlib.compress(b"\x00\xff\xff\xff\xff")
    return b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", header) + chunk(b"IDAT", pixels) + chunk(b"IEND", b"")


LOGO_PNG = _tiny_png()


class Fault(str, enum.Enum):
    HTTP500 = "http500"
    STALL = "stall"
    MALFORMED_LINE = "malformed_line"
    MODEL_MISSING = "model_missing"


@dataclass
class MockConfig:
    """Knobs for the mock server.

    ``fault`` applies to every request; ``fault_triggers`` maps a substring
    of the prompt (last user message, or embedding input) to a fault for that
    request only.
    """

    port: int = 0
    host: str = "127.0.0.1"
    registered_models: dict[str, int] = field(default_factory=lambda: dict(DIMENSION_TABLE))
    chunk_size: int = 4096
    fault: Fault | None = None
    keyword_table: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_KEYWORDS))
    fault_triggers: dict[str, Fault] = field(default_factory=dict)
    stall_seconds: float = 30.0
    static_files: dict[str, bytes] = field(default_factory=lambda: {"ollama.png": LOGO_PNG})

    def __post_init__(self) -> None:
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        self.registered_models = {
            ModelTag.parse(name).canonical: dim for name, dim in self.registered_models.items()
        }
        if any(dim < 1 for dim in self.registered_models.values()):
            raise ValueError("embedding dimensions must be >= 1")
        if self.fault is not None:
            self.fault = Fault(self.fault)
        self.fault_triggers = {k: Fault(v) for k, v in self.fault_triggers.items()}
        self.keyword_table = {k.lower(): v for k, v in self.keyword_table.items()}


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & MASK64
    return h


def _squash(text: str) -> str:
    return " ".join(text.split())


def canonical_input(
    model: str,
    prompt_or_messages: str | Sequence[Mapping[str, Any]],
    seed: int | None,
    system: str | None = None,
) -> bytes:
    """Stable byte serialization of a request's semantic content."""
    if isinstance(prompt_or_messages, str):
        payload: Any = _squash(prompt_or_messages)
    else:
        payload = [
            {"role": m.get("role", ""), "content": _squash(m.get("content", "")), "images": len(m.get("images") or [])}
            for m in prompt_or_messages
        ]
    doc = {
        "model": ModelTag.parse(model).canonical,
        "input": payload,
        "seed": seed,
        "system": None if system is None else _squash(system),
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def last_user_content(prompt_or_messages: str | Sequence[Mapping[str, Any]]) -> str:
    if isinstance(prompt_or_messages, str):
        return prompt_or_messages
    for message in reversed(prompt_or_messages):
        if message.get("role") == "user":
            return message.get("content", "")
    return ""


def system_content(prompt_or_messages, system: str | None = None) -> str:
    if system is not None:
        return system
    if isinstance(prompt_or_messages, str):
        return ""
    return "\n".join(m.get("content", "") for m in prompt_or_messages if m.get("role") == "system")


def keyword_label(text: str, table: Mapping[str, str]) -> str | None:
    """Category of the earliest keyword found in ``text`` as a whole word."""
    best: tuple[int, str] | None = None
    lowered = text.lower()
    for keyword, label in table.items():
        match = re.search(rf"\b{re.escape(keyword)}\b", lowered)
        if match and (best is None or match.start() < best[0]):
            best = (match.start(), label)
    return None if best is None else best[1]


def mock_completion(
    model: str,
    prompt_or_messages: str | Sequence[Mapping[str, Any]],
    options: Mapping[str, Any] | None,
    *,
    system: str | None = None,
    keyword_table: Mapping[str, str] = DEFAULT_KEYWORDS,
    nonce: bytes | None = None,
) -> str:
    options = options or {}
    user = last_user_content(prompt_or_messages)
    if "categories" in system_content(prompt_or_messages, system):
        label = keyword_label(user, keyword_table)
        if label is not None:
            return label
    seed = options.get("seed")
    data = canonical_input(model, prompt_or_messages, seed, system)
    if not (seed is not None and options.get("temperature") == 0):
        data += nonce if nonce is not None else secrets.token_bytes(8)
    digest = f"{fnv1a64(data):016x}"
    return f"mock({digest[:8]}): {user[:64]}"


def mock_embedding(model: str, text: str, dimension: int) -> list[float]:
    key = fnv1a64(json.dumps([ModelTag.parse(model).canonical, text], ensure_ascii=False).encode("utf-8"))
    rng = np.random.Generator(np.random.Philox(key=key))
    return rng.uniform(-1.0, 1.0, dimension).tolist()


def model_size(model: str) -> int:
    return 1_000_000 + fnv1a64(ModelTag.parse(model).canonical.encode()) % 4_000_000_000


def pull_progress(model: str, steps: int = 4) -> list[dict[str, Any]]:
    canonical = ModelTag.parse(model).canonical
    total = model_size(canonical)
    digest = f"sha256:{fnv1a64(canonical.encode()):016x}"
    lines: list[dict[str, Any]] = [{"status": "pulling manifest"}]
    for k in range(steps + 1):
        lines.append({
            "status": f"pulling {digest[7:19]}",
            "digest": digest,
            "total": total,
            "completed": total * k // steps,
        })
    lines += [{"status": "verifying sha256 digest"}, {"status": "writing manifest"}, {"status": "success"}]
    return lines


def tokens(text: str) -> list[str]:
    return re.findall(r"\S+\s*|\s+", text)


def completion_lines(
    model: str,
    text: str,
    *,
    chat: bool,
    stream: bool,
    prompt_tokens: int = 0,
    created_at: str = "2024-01-01T00:00:00Z",
) -> list[dict[str, Any]]:
    """The JSON objects making up a generate/chat reply, in wire order."""

    def record(piece: str, done: bool) -> dict[str, Any]:
        obj: dict[str, Any] = {"model": model, "created_at": created_at}
        if chat:
            obj["message"] = {"role": "assistant", "content": piece}
        else:
            obj["response"] = piece
        obj["done"] = done
        return obj

    pieces = tokens(text)
    final = record("" if stream else text, True)
    final.update({
        "done_reason": "stop",
        "total_duration": 1000 * (len(pieces) + prompt_tokens + 1),
        "load_duration": 1000,
        "prompt_eval_count": prompt_tokens,
        "prompt_eval_duration": 1000 * prompt_tokens,
        "eval_count": len(pieces),
        "eval_duration": 1000 * len(pieces),
    })
    if not stream:
        return [final]
    return [record(p, False) for p in pieces] + [final]


def encode_lines(objects: Sequence[Mapping[str, Any]]) -> bytes:
    return b"".join(json.dumps(o, ensure_ascii=False).encode("utf-8") + b"\n" for o in objects)


def split_chunks(data: bytes, size: int) -> list[bytes]:
    return [data[i:i + size] for i in range(0, len(data), size)] or [b""]
