"""``ollo`` command-line tool."""

from __future__ import annotations

import argparse
import json
import signal
import sys
import threading
from pathlib import Path
from typing import Any, Sequence

from . import annotate as ann
from .embed import embed_texts, write_matrix
from .errors import ApiError, ModelMissing
from .session import chat, new_session, reset, save_transcript
from .transport import OllamaClient, encode_image
from .types import ContentDelta, GenerationOptions, PullProgress, ServerConfig

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_MODEL_MISSING = 2
EXIT_USAGE = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--host", help="server URL (default: $OLLO_HOST or http://localhost:11434)")
    p.add_argument("--model", help="model tag (default: $OLLO_MODEL or llama2)")
    p.add_argument("--seed", type=int, help="sampling seed; implies --temperature 0 unless given")
    p.add_argument("--temperature", type=float)
    p.add_argument("--timeout", type=int, default=120, help="request timeout in seconds")
    p.add_argument("--format", choices=("text", "json"), default="text")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="ollo", description="Work with a local Ollama server.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("ping", parents=[common], help="check that the server is up")

    p = sub.add_parser("pull", parents=[common], help="download a model")
    p.add_argument("name", nargs="?", help="model tag; defaults to --model")

    sub.add_parser("models", parents=[common], help="list local models")

    p = sub.add_parser("query", parents=[common], help="one stateless question")
    p.add_argument("prompt")
    p.add_argument("--image", action="append", default=[], help="image path or URL (repeatable)")
    p.add_argument("--system")
    p.add_argument("--no-stream", dest="stream", action="store_false")

    p = sub.add_parser("chat", parents=[common], help="interactive conversation")
    p.add_argument("--system")

    p = sub.add_parser("annotate", parents=[common], help="classify every text in a corpus")
    p.add_argument("corpus")
    p.add_argument("--categories", default="", help='labels separated by "|"')
    p.add_argument("--strategy", choices=[s.value for s in ann.Strategy], default="zero_shot")
    p.add_argument("--examples", help="CSV/JSONL file with text,answer rows")
    p.add_argument("--system", default=ann.DEFAULT_SYSTEM)
    p.add_argument("--out")
    p.add_argument("--concurrency", type=int, default=1)

    p = sub.add_parser("embed", parents=[common], help="embed every text in a corpus")
    p.add_argument("corpus")
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--out")
    p.add_argument("--concurrency", type=int, default=1)

    p = sub.add_parser("mock", help="run the deterministic mock server")
    p.add_argument("--port", type=int, default=11434)
    p.add_argument("--bind", default="127.0.0.1")
    p.add_argument("--fault", choices=["http500", "stall", "malformed_line", "model_missing"])
    p.add_argument("--chunk-size", type=int, default=4096)
    p.add_argument("--no-models", action="store_true", help="start with no registered models")
    return parser


def _config(args) -> ServerConfig:
    try:
        return ServerConfig.from_env(base_url=args.host, default_model=args.model, timeout=args.timeout)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _options(args) -> GenerationOptions:
    temperature = args.temperature
    if args.seed is not None and temperature is None:
        temperature = 0.0
    try:
        return GenerationOptions(seed=args.seed, temperature=temperature)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _emit_json(doc: Any) -> None:
    sys.stdout.write(json.dumps(doc, ensure_ascii=False, default=str) + "\n")


def _err(message: str) -> None:
    print(message, file=sys.stderr)


def cmd_ping(args, client: OllamaClient) -> int:
    status = client.ping()
    if args.format == "json":
        _emit_json({"reachable": status.reachable, "version": status.version})
    elif status.reachable:
        print(f"OK {status.version}" if status.version else "OK")
    else:
        print(f"UNREACHABLE {client.config.base_url}")
    return EXIT_OK if status.reachable else EXIT_FAILURE


def cmd_pull(args, client: OllamaClient) -> int:
    def progress(event) -> None:
        if isinstance(event, PullProgress):
            if event.total:
                _err(f"{event.status} {event.completed or 0}/{event.total}")
            else:
                _err(event.status)

    result = client.pull_model(args.name, progress)
    if args.format == "json":
        _emit_json({"model": str(result.model), "ok": result.ok})
    else:
        print(f"{'pulled' if result.ok else 'failed to pull'} {result.model}")
    return EXIT_OK if result.ok else EXIT_FAILURE


def cmd_models(args, client: OllamaClient) -> int:
    models = client.list_models()
    if args.format == "json":
        _emit_json([
            {"model": str(m.model), "size_bytes": m.size_bytes,
             "modified_at": m.modified_at.isoformat() if m.modified_at else None}
            for m in models
        ])
    else:
        for m in models:
            print(f"{m.model}\t{m.size_bytes}")
    return EXIT_OK


def _stream_to_stdout(event) -> None:
    if isinstance(event, ContentDelta):
        sys.stdout.write(event.text)
        sys.stdout.flush()


def cmd_query(args, client: OllamaClient) -> int:
    images = [encode_image(src) for src in args.image]
    streaming = args.stream and args.format == "text"
    completion = client.generate(
        args.prompt, args.model, _options(args), images,
        sink=_stream_to_stdout if streaming else None, system=args.system,
    )
    if args.format == "json":
        _emit_json({"model": str(client.config.default_model if args.model is None else args.model),
                    "text": completion.text, "stats": completion.stats})
    elif streaming:
        sys.stdout.write("\n")
    else:
        sys.stdout.write(completion.text + "\n")
    return EXIT_OK


def cmd_chat(args, client: OllamaClient) -> int:
    session = new_session(args.model or client.config.default_model, args.system, _options(args))
    interactive = sys.stdin.isatty()
    while True:
        if interactive:
            sys.stderr.write(">>> ")
            sys.stderr.flush()
        line = sys.stdin.readline()
        if not line:
            break
        text = line.rstrip("\n")
        if not text.strip():
            continue
        if text.startswith("/"):
            command, _, rest = text.partition(" ")
            if command == "/quit":
                break
            if command == "/new":
                session = reset(session)
                _err("(new conversation)")
            elif command == "/save":
                if not rest.strip():
                    _err("usage: /save <path>")
                    continue
                try:
                    save_transcript(session, rest.strip())
                except OSError as exc:
                    _err(f"error: {exc}")
                else:
                    _err(f"saved {len(session.history)} messages to {rest.strip()}")
            else:
                _err(f"unknown command {command}; try /new, /save <path>, /quit")
            continue
        try:
            _, session = chat(client, session, text, sink=_stream_to_stdout)
        except ApiError as exc:
            sys.stdout.write("\n")
            _err(f"error: {exc}")
            continue
        sys.stdout.write("\n")
        sys.stdout.flush()
    return EXIT_OK


def _default_out(corpus: str, suffix: str) -> Path:
    path = Path(corpus)
    return path.with_name(f"{path.stem}.{suffix}{path.suffix or '.csv'}")


def cmd_annotate(args, client: OllamaClient) -> int:
    strategy = ann.Strategy(args.strategy)
    try:
        examples = ann.read_examples(args.examples) if args.examples else ()
        strategy.check_examples(len(examples))
        template = ann.PromptTemplate(system=args.system, examples=examples)
        categories = ann.split_categories(args.categories)
        records = ann.read_corpus(args.corpus, categories=categories)
    except (ValueError, OSError) as exc:
        raise UsageError(str(exc)) from exc
    if args.concurrency < 1:
        raise UsageError("--concurrency must be >= 1")
    out = Path(args.out) if args.out else _default_out(args.corpus, "annotated")
    results = ann.annotate_batch(
        client, records, template, strategy, args.model, _options(args), args.concurrency,
    )
    ann.write_results(results, out)
    failed = sum(r.error is not None for r in results)
    if args.format == "json":
        _emit_json({"annotated": len(results) - failed, "failed": failed, "out": str(out)})
    else:
        print(f"annotated {len(results) - failed}, failed {failed}")
    return EXIT_FAILURE if failed else EXIT_OK


def cmd_embed(args, client: OllamaClient) -> int:
    try:
        records = ann.read_corpus(args.corpus)
    except (ValueError, OSError) as exc:
        raise UsageError(str(exc)) from exc
    if args.concurrency < 1:
        raise UsageError("--concurrency must be >= 1")
    out = Path(args.out) if args.out else _default_out(args.corpus, "embeddings")
    fmt = "jsonl" if out.suffix.lower() in (".jsonl", ".ndjson") else "csv"
    matrix = embed_texts(
        client, [(r.id, r.text) for r in records], args.model, args.normalize, args.concurrency,
    )
    write_matrix(matrix, out, fmt)
    if args.format == "json":
        _emit_json({"rows": len(matrix), "dimension": matrix.dimension, "out": str(out)})
    else:
        print(f"embedded {len(matrix)} texts ({matrix.dimension} dimensions) -> {out}")
    return EXIT_OK


def cmd_mock(args) -> int:
    from .mockd import MockConfig, MockServer

    config = MockConfig(
        port=args.port, host=args.bind, fault=args.fault, chunk_size=args.chunk_size,
        **({"registered_models": {}} if args.no_models else {}),
    )
    server = MockServer(config)
    try:
        server.start()
    except OSError as exc:
        _err(f"cannot bind {args.bind}:{args.port}: {exc}")
        return EXIT_FAILURE
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    print(f"listening on {server.base_url}", flush=True)
    try:
        while not stop.wait(0.2):
            pass
    finally:
        server.shutdown()
    return EXIT_OK


COMMANDS = {
    "ping": cmd_ping,
    "pull": cmd_pull,
    "models": cmd_models,
    "query": cmd_query,
    "chat": cmd_chat,
    "annotate": cmd_annotate,
    "embed": cmd_embed,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "mock":
        return cmd_mock(args)
    try:
        client = OllamaClient(_config(args))
    except UsageError as exc:
        _err(f"ollo: error: {exc}")
        return EXIT_USAGE
    try:
        with client:
            return COMMANDS[args.command](args, client)
    except UsageError as exc:
        _err(f"ollo: error: {exc}")
        return EXIT_USAGE
    except ModelMissing as exc:
        _err(f"error: {exc}")
        return EXIT_MODEL_MISSING
    except (ApiError, OSError) as exc:
        _err(f"error: {exc}")
        return EXIT_FAILURE
    except KeyboardInterrupt:
        _err("interrupted")
        return 130


if __name__ == "__main__":
    sys.exit(main())
