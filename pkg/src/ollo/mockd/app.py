"""FastAPI application emulating the Ollama HTTP API."""

from __future__ import annotations

import asyncio
import json
import threading
from datetime import datetime, timezone
from typing import Any, Iterator

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse, Response, StreamingResponse
from pydantic import BaseModel, ValidationError

from ..types import ModelTag
from . import oracle
from .oracle import Fault, MockConfig
from .schemas import (
    CaptureEntry,
    ChatRequest,
    EmbeddingsRequest,
    EmbeddingsResponse,
    GenerateRequest,
    ModelEntry,
    PullRequest,
    TagsResponse,
    VersionResponse,
)

NDJSON = "application/x-ndjson"
MALFORMED = b"not json\n"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")


class MockState:
    """Mutable server state: registered models and the request capture log."""

    def __init__(self, config: MockConfig):
        self.config = config
        self._lock = threading.Lock()
        self.models: dict[str, dict[str, Any]] = {
            name: {"dimension": dim, "modified_at": _now()}
            for name, dim in config.registered_models.items()
        }
        self.capture: list[CaptureEntry] = []

    def record(self, method: str, path: str, body: bytes) -> None:
        with self._lock:
            self.capture.append(CaptureEntry(
                seq=len(self.capture), method=method, path=path,
                body=body.decode("utf-8", errors="replace"),
            ))

    def register(self, model: str) -> None:
        canonical = ModelTag.parse(model).canonical
        with self._lock:
            if canonical not in self.models:
                dim = oracle.DIMENSION_TABLE.get(canonical, oracle.FALLBACK_DIMENSION)
                self.models[canonical] = {"dimension": dim, "modified_at": _now()}

    def lookup(self, model: str) -> dict[str, Any] | None:
        try:
            canonical = ModelTag.parse(model).canonical
        except ValueError:
            return None
        with self._lock:
            return self.models.get(canonical)


def _missing(model: str) -> JSONResponse:
    return JSONResponse({"error": f'model "{model}" not found, try pulling it first'}, status_code=404)


def _chunked(data: bytes, size: int) -> Iterator[bytes]:
    yield from oracle.split_chunks(data, size)


def create_app(config: MockConfig | None = None) -> FastAPI:
    config = config or MockConfig()
    state = MockState(config)
    app = FastAPI(title="ollo mock server")
    app.state.mock = state

    async def capture(request: Request) -> bytes:
        body = await request.body()
        state.record(request.method, request.url.path, body)
        return body

    def fault_for(trigger_text: str | None) -> Fault | None:
        if config.fault is not None:
            return config.fault
        if trigger_text:
            for needle, fault in config.fault_triggers.items():
                if needle in trigger_text:
                    return fault
        return None

    def parse(model: type[BaseModel], body: bytes):
        try:
            return model.model_validate_json(body or b"{}")
        except ValidationError as exc:
            return JSONResponse({"error": f"invalid request: {exc.errors()[0]['msg']}"}, status_code=400)

    def server_error() -> JSONResponse:
        return JSONResponse({"error": "injected fault: internal server error"}, status_code=500)

    def reply(lines: list[dict[str, Any]], stream: bool, fault: Fault | None) -> Response:
        data = oracle.encode_lines(lines)
        if fault is Fault.MALFORMED_LINE:
            first, _, rest = data.partition(b"\n")
            data = first + b"\n" + MALFORMED + rest
        if not stream:
            body = MALFORMED if fault is Fault.MALFORMED_LINE else data
            return Response(body, media_type="application/json")
        return StreamingResponse(_chunked(data, config.chunk_size), media_type=NDJSON)

    async def pre(fault: Fault | None) -> Response | None:
        if fault is Fault.HTTP500:
            return server_error()
        if fault is Fault.STALL:
            await asyncio.sleep(config.stall_seconds)
        return None

    @app.get("/api/version", response_model=VersionResponse)
    async def version(request: Request):
        await capture(request)
        if config.fault is Fault.HTTP500:
            return server_error()
        return VersionResponse(version=oracle.MOCK_VERSION)

    @app.get("/api/tags", response_model=TagsResponse)
    async def tags(request: Request):
        await capture(request)
        if config.fault is Fault.HTTP500:
            return server_error()
        with state._lock:
            items = sorted(state.models.items())
        return TagsResponse(models=[
            ModelEntry(
                name=name, model=name, modified_at=info["modified_at"],
                size=oracle.model_size(name),
                digest=f"{oracle.fnv1a64(name.encode()):016x}",
            )
            for name, info in items
        ])

    @app.post("/api/pull")
    async def pull(request: Request):
        req = parse(PullRequest, await capture(request))
        if isinstance(req, Response):
            return req
        name = req.name or req.model
        if not name:
            return JSONResponse({"error": "missing model name"}, status_code=400)
        fault = fault_for(name)
        if (early := await pre(fault)) is not None:
            return early
        lines = oracle.pull_progress(name)
        state.register(name)
        return reply(lines if req.stream else lines[-1:], req.stream, fault)

    @app.post("/api/generate")
    async def generate(request: Request):
        req = parse(GenerateRequest, await capture(request))
        if isinstance(req, Response):
            return req
        fault = fault_for(req.prompt)
        if (early := await pre(fault)) is not None:
            return early
        if fault is Fault.MODEL_MISSING or state.lookup(req.model) is None:
            return _missing(req.model)
        text = oracle.mock_completion(
            req.model, req.prompt, req.options, system=req.system, keyword_table=config.keyword_table,
        )
        lines = oracle.completion_lines(
            req.model, text, chat=False, stream=req.stream,
            prompt_tokens=len(oracle.tokens(req.prompt)), created_at=_now(),
        )
        return reply(lines, req.stream, fault)

    @app.post("/api/chat")
    async def chat(request: Request):
        req = parse(ChatRequest, await capture(request))
        if isinstance(req, Response):
            return req
        messages = [m.model_dump(exclude_none=True) for m in req.messages]
        fault = fault_for(oracle.last_user_content(messages))
        if (early := await pre(fault)) is not None:
            return early
        if fault is Fault.MODEL_MISSING or state.lookup(req.model) is None:
            return _missing(req.model)
        text = oracle.mock_completion(
            req.model, messages, req.options, keyword_table=config.keyword_table,
        )
        prompt_tokens = sum(len(oracle.tokens(m["content"])) for m in messages)
        lines = oracle.completion_lines(
            req.model, text, chat=True, stream=req.stream,
            prompt_tokens=prompt_tokens, created_at=_now(),
        )
        return reply(lines, req.stream, fault)

    @app.post("/api/embeddings", response_model=EmbeddingsResponse)
    async def embeddings(request: Request):
        req = parse(EmbeddingsRequest, await capture(request))
        if isinstance(req, Response):
            return req
        fault = fault_for(req.prompt)
        if (early := await pre(fault)) is not None:
            return early
        info = state.lookup(req.model)
        if fault is Fault.MODEL_MISSING or info is None:
            return _missing(req.model)
        if fault is Fault.MALFORMED_LINE:
            return Response(MALFORMED, media_type="application/json")
        return EmbeddingsResponse(embedding=oracle.mock_embedding(req.model, req.prompt, info["dimension"]))

    @app.get("/static/{name}")
    async def static(name: str):
        if name not in config.static_files:
            return JSONResponse({"error": f"no static file {name}"}, status_code=404)
        return Response(config.static_files[name], media_type="application/octet-stream")

    @app.get("/debug/capture")
    async def debug_capture():
        with state._lock:
            entries = list(state.capture)
        body = "".join(json.dumps(e.model_dump(), ensure_ascii=False) + "\n" for e in entries)
        return PlainTextResponse(body, media_type=NDJSON)

    return app
