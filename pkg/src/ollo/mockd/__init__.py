"""Deterministic stand-in for an Ollama server, for offline tests."""

from .app import create_app
from .oracle import MOCK_VERSION, Fault, MockConfig, mock_completion, mock_embedding
from .server import MockServer, serve

__all__ = [
    "MOCK_VERSION",
    "Fault",
    "MockConfig",
    "MockServer",
    "create_app",
    "mock_completion",
    "mock_embedding",
    "serve",
]
