"""Client toolkit for local Ollama servers, with a deterministic mock server for tests."""

from .errors import (
    ApiError,
    ErrorKind,
    HttpStatusError,
    ModelMissing,
    ProtocolError,
    RequestTimeout,
    Unreachable,
)
from .ndjson import NDJSONDecoder, decode_ndjson
from .transport import Completion, ModelInfo, OllamaClient, PullResult, ServerStatus, encode_image
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

__version__ = "0.1.0"
