"""Exception hierarchy for talking to an Ollama-compatible server."""

from __future__ import annotations

import enum


class ErrorKind(str, enum.Enum):
    UNREACHABLE = "unreachable"
    TIMEOUT = "timeout"
    HTTP_STATUS = "http_status"
    PROTOCOL = "protocol"
    MODEL_MISSING = "model_missing"


class ApiError(Exception):
    """Base class for every failure reported by the transport layer."""

    kind: ErrorKind

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class Unreachable(ApiError):
    kind = ErrorKind.UNREACHABLE


class RequestTimeout(ApiError):
    kind = ErrorKind.TIMEOUT


class HttpStatusError(ApiError):
    kind = ErrorKind.HTTP_STATUS

    def __init__(self, code: int, message: str):
        if 200 <= code <= 299:
            raise ValueError(f"HttpStatusError requires a non-2xx code, got {code}")
        super().__init__(message)
        self.code = code


class ProtocolError(ApiError):
    kind = ErrorKind.PROTOCOL

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class ModelMissing(ApiError):
    kind = ErrorKind.MODEL_MISSING


def from_server_error(message: str, code: int | None = None) -> ApiError:
    """Map an error reported by the server onto the matching ApiError subclass."""
    if code == 404 or "not found" in message.lower():
        return ModelMissing(message)
    if code is not None and not 200 <= code <= 299:
        return HttpStatusError(code, message)
    return ProtocolError(f"server reported an error: {message}")
