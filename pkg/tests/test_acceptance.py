"""Exit criteria. Each test carries an ``acceptance`` marker; the terminal
summary prints one PASS/FAIL line per criterion."""

import csv
import filecmp
import math
import os
import random
import signal
import subprocess
import sys
import time

import httpx
import pytest

from ollo.annotate import AnnotationRecord, PromptTemplate, Strategy, annotate_batch, build_messages, validate_answer, write_results
from ollo.embed import embed_texts, read_matrix, write_matrix
from ollo.mockd import Fault
from ollo.ndjson import decode_ndjson
from ollo.session import chat, dump_transcript, new_session, parse_transcript, reset
from ollo.transport import OllamaClient, encode_image
from ollo.types import ChatMessage, GenerationOptions, Role, ServerConfig

WORDS = "sky blue why light ocean mountain river café naïve 🌍 résumé data model seed apple".split()
CATS = ["positive", "neutral", "negative"]


def _prompt(rng):
    return " ".join(rng.choice(WORDS) for _ in range(rng.randint(1, 12))) + "?"


# 1 ----------------------------------------------------------------------


@pytest.mark.acceptance(1, "determinism suite (query + chat, 50 pairs, < 10 s)")
def test_determinism_suite(client):
    rng = random.Random(20240101)
    pairs = [(_prompt(rng), rng.randrange(2**31)) for _ in range(50)]
    start = time.perf_counter()

    def query(prompt, options):
        return client.generate(prompt, options=options).text

    def chat_path(prompt, options):
        return client.chat_request([ChatMessage.user(prompt)], options=options).content

    for path in (query, chat_path):
        seeded = [[path(p, GenerationOptions(seed=s, temperature=0)) for p, s in pairs] for _ in range(2)]
        assert seeded[0] == seeded[1], f"{path.__name__}: seeded runs differ"
        unseeded = [[path(p, GenerationOptions(temperature=0)) for p, _ in pairs] for _ in range(2)]
        differing = sum(a != b for a, b in zip(*unseeded))
        assert differing >= 49, f"{path.__name__}: only {differing}/50 unseeded pairs differ"
    elapsed = time.perf_counter() - start
    assert elapsed < 10, f"took {elapsed:.2f}s"


# 2 ----------------------------------------------------------------------


def _fixture_streams(server):
    rng = random.Random(7)
    streams = []
    with httpx.Client(base_url=server.base_url) as http:
        for i in range(20):
            kind = i % 3
            if kind == 0:
                body = {"model": "llama2", "prompt": _prompt(rng), "options": {"seed": i, "temperature": 0}}
                path = "/api/generate"
            elif kind == 1:
                body = {"model": "llama2", "messages": [{"role": "user", "content": _prompt(rng)}]}
                path = "/api/chat"
            else:
                body = {"name": f"model{i}:tag"}
                path = "/api/pull"
            with http.stream("POST", path, json=body) as r:
                streams.append(r.read())
    return streams


@pytest.mark.acceptance(2, "chunking invariance (20 streams x 100 partitions, < 5 s)")
def test_chunking_invariance(make_mock):
    server = make_mock(chunk_size=7)
    streams = _fixture_streams(server)
    rng = random.Random(99)
    start = time.perf_counter()
    for data in streams:
        reference = list(decode_ndjson([data]))
        assert reference
        for _ in range(100):
            cuts = sorted(rng.sample(range(1, len(data)), rng.randint(1, min(40, len(data) - 1))))
            bounds = [0, *cuts, len(data)]
            chunks = [data[a:b] for a, b in zip(bounds, bounds[1:])]
            assert list(decode_ndjson(chunks)) == reference
    elapsed = time.perf_counter() - start
    assert elapsed < 5, f"took {elapsed:.2f}s"


# 3 ----------------------------------------------------------------------


@pytest.mark.acceptance(3, "reference examples (pizza prompt, multimodal request)")
def test_pizza_prompt(mock, client):
    messages = build_messages(PromptTemplate(), Strategy.ZERO_SHOT, "the pizza tastes terrible", CATS)
    assert [m.to_wire() for m in messages] == [
        {"role": "system", "content": "You assign texts into categories. Answer with just the correct category."},
        {"role": "user", "content": "text: the pizza tastes terrible\ncategories: positive, neutral, negative"},
    ]
    reply = client.chat_request(messages, options=GenerationOptions(seed=42, temperature=0))
    assert validate_answer(reply.content, CATS) == "negative"
    (body,) = mock.captured_bodies("/api/chat")
    assert body["messages"] == [m.to_wire() for m in messages]


@pytest.mark.acceptance(3, "reference examples (pizza prompt, multimodal request)")
def test_multimodal_request(mock, client):
    assert client.pull_model("llava").ok
    image = encode_image(f"{mock.base_url}/static/ollama.png")
    assert client.generate("Excitedly desscribe this logo", "llava", images=[image]).text
    (body,) = mock.captured_bodies("/api/generate")
    assert body["model"] == "llava" and body["prompt"] == "Excitedly desscribe this logo"
    assert body["images"] == [image.data]


# 4 ----------------------------------------------------------------------


@pytest.mark.acceptance(4, "session algebra (random scripts <= 20 steps)")
def test_session_algebra(client):
    rng = random.Random(4)
    for script in range(30):
        session = new_session("llama2", rng.choice([None, "Be concise."]),
                              GenerationOptions(seed=script, temperature=0))
        n = 0
        for _ in range(rng.randint(1, 20)):
            action = rng.choices(["chat", "reset", "roundtrip"], [6, 1, 1])[0]
            if action == "chat":
                _, session = chat(client, session, _prompt(rng))
                n += 1
            elif action == "reset":
                before = session
                session = reset(session)
                n = 0
                assert session.history == ()
                assert (session.model, session.system_prompt, session.options) == \
                    (before.model, before.system_prompt, before.options)
            else:
                import io

                buf = io.StringIO()
                dump_transcript(session, buf)
                assert parse_transcript(buf.getvalue().split("\n")) == session
            assert len(session.history) == 2 * n
            roles = [m.role for m in session.history]
            assert roles == [Role.USER, Role.ASSISTANT] * n


# 5 ----------------------------------------------------------------------


def _synthetic_corpus(n):
    rng = random.Random(5)
    words = ["terrible", "delicious", "okay", "plain", "great", "awful", "average", "blue", "FAULT500", "NOMODEL"]
    return [
        AnnotationRecord(str(i), f"item {i}: {rng.choice(words)} {rng.choice(WORDS)}", CATS)
        for i in range(n)
    ]


@pytest.mark.acceptance(5, "batch equivalence (200 records, concurrency 1 vs 8, fault isolation)")
def test_batch_equivalence(make_mock, tmp_path):
    server = make_mock(fault_triggers={"FAULT500": Fault.HTTP500, "NOMODEL": Fault.MODEL_MISSING})
    client = OllamaClient(ServerConfig(server.base_url))
    records = _synthetic_corpus(200)
    paths = []
    for concurrency in (1, 8):
        results = annotate_batch(client, records, seed=42, concurrency=concurrency, progress=None)
        assert len(results) == 200 and [r.id for r in results] == [r.id for r in records]
        assert all((r.answer is None) != (r.error is None) for r in results)
        path = tmp_path / f"c{concurrency}.csv"
        write_results(results, path)
        paths.append(path)
    assert filecmp.cmp(*paths, shallow=False)
    faulted = [r for r in results if "FAULT500" in r.text or "NOMODEL" in r.text]
    assert faulted and all(r.error for r in faulted)
    assert any(r.answer for r in results)


# 6 ----------------------------------------------------------------------


@pytest.mark.acceptance(6, "embedding pipeline (50 x 768, reproducible, exact CSV round trip, unit norms)")
def test_embedding_pipeline(client, tmp_path):
    texts = [(f"doc{i}", f"It’s a beautiful day number {i}") for i in range(50)]
    first = embed_texts(client, texts, "nomic-embed-text", concurrency=4)
    assert (len(first), first.dimension) == (50, 768)
    assert embed_texts(client, texts, "nomic-embed-text") == first
    path = tmp_path / "m.csv"
    write_matrix(first, path)
    assert read_matrix(path, "nomic-embed-text") == first
    normed = embed_texts(client, texts, "nomic-embed-text", normalize_rows=True)
    for row in normed.vectors:
        assert abs(math.sqrt(math.fsum(x * x for x in row)) - 1.0) <= 1e-9


# 7 ----------------------------------------------------------------------


def _ollo(*args, stdin=None, env=None):
    return subprocess.run([sys.executable, "-m", "ollo", *args], input=stdin, capture_output=True,
                          text=True, timeout=60, env=env)


@pytest.fixture
def spawned_mock():
    proc = subprocess.Popen([sys.executable, "-m", "ollo", "mock", "--port", "0"],
                            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
    line = proc.stdout.readline()
    assert line.startswith("listening on "), line
    yield line.split()[-1]
    proc.send_signal(signal.SIGINT)
    assert proc.wait(timeout=15) == 0


@pytest.mark.acceptance(7, "CLI end-to-end against a spawned mock server")
def test_cli_end_to_end(spawned_mock, tmp_path):
    env = {k: v for k, v in os.environ.items() if not k.startswith("OLLO_")}
    env["OLLO_HOST"] = spawned_mock

    ping = _ollo("ping", env=env)
    assert (ping.returncode, ping.stdout) == (0, "OK 0.0.0-mock\n")

    pull = _ollo("pull", "llava", env=env)
    assert pull.returncode == 0

    transcript = tmp_path / "t.jsonl"
    repl = _ollo("chat", stdin=f"why is the sky blue?\nand how do you know that?\n/save {transcript}\n/quit\n", env=env)
    assert repl.returncode == 0
    assert len(transcript.read_text().splitlines()) == 1 + 4

    corpus = tmp_path / "c.csv"
    corpus.write_text("id,text\n1,the pizza tastes terrible\n2,what a great day\n")
    out = tmp_path / "o.csv"
    annotated = _ollo("annotate", str(corpus), "--categories", "positive|neutral|negative", "--seed", "42",
                      "--out", str(out), env=env)
    assert (annotated.returncode, annotated.stdout) == (0, "annotated 2, failed 0\n")
    assert [r["answer"] for r in csv.DictReader(out.open())] == ["negative", "positive"]

    usage = _ollo("annotate", str(corpus), "--categories", "a|b", "--strategy", "one_shot", env=env)
    assert usage.returncode == 64

    emb = tmp_path / "e.csv"
    embedded = _ollo("embed", str(corpus), "--model", "nomic-embed-text", "--normalize", "--out", str(emb), env=env)
    assert embedded.returncode == 0
    rows = list(csv.reader(emb.open()))
    assert len(rows[0]) == 769 and len(rows) == 3

    missing = _ollo("query", "--model", "nope", "x", env=env)
    assert missing.returncode == 2

    args = ("query", "--seed", "42", "Why is the sky blue? Answer in one sentence.")
    streamed, plain = _ollo(*args, env=env), _ollo(*args[:-1], "--no-stream", args[-1], env=env)
    assert streamed.returncode == plain.returncode == 0
    assert streamed.stdout == plain.stdout and streamed.stdout.strip()


@pytest.mark.acceptance(7, "CLI end-to-end against a spawned mock server")
def test_cli_unreachable_exit_codes(closed_url, tmp_path):
    env = {k: v for k, v in os.environ.items() if not k.startswith("OLLO_")}
    corpus = tmp_path / "c.csv"
    corpus.write_text("id,text\n1,x\n")
    assert _ollo("ping", "--host", closed_url, env=env).returncode == 1
    assert _ollo("embed", str(corpus), "--host", closed_url, "--out", str(tmp_path / "e.csv"), env=env).returncode == 1
    assert not (tmp_path / "e.csv").exists()


# 8 ----------------------------------------------------------------------

REAL_HOST = os.environ.get("OLLO_INTEGRATION_HOST")
REAL_MODEL = os.environ.get("OLLO_INTEGRATION_MODEL", "llama2")
REAL_EMBED_MODEL = os.environ.get("OLLO_INTEGRATION_EMBED_MODEL", "nomic-embed-text")
needs_server = pytest.mark.skipif(not REAL_HOST, reason="set OLLO_INTEGRATION_HOST to run against a real server")


@needs_server
@pytest.mark.integration
@pytest.mark.acceptance(8, "integration smoke test against a real server (optional)")
def test_real_server_smoke():
    client = OllamaClient(ServerConfig(REAL_HOST, default_model=REAL_MODEL))
    assert client.ping().reachable
    assert client.pull_model().ok
    assert client.pull_model(REAL_EMBED_MODEL).ok
    assert client.generate("why is the sky blue?").text
    reply, session = chat(client, new_session(REAL_MODEL), "why is the sky blue?")
    assert reply and len(session.history) == 2
    assert len(client.embed_request("It’s a beautiful day", REAL_EMBED_MODEL)) > 0


@needs_server
@pytest.mark.integration
@pytest.mark.acceptance(8, "integration smoke test against a real server (optional)")
def test_real_server_determinism():
    client = OllamaClient(ServerConfig(REAL_HOST, default_model=REAL_MODEL))
    options = GenerationOptions(seed=42, temperature=0)
    prompt = "Why is the sky blue? Answer in one sentence."
    first, second = (client.generate(prompt, options=options).text for _ in range(2))
    if first != second:
        pytest.skip("server did not reproduce seeded output; depends on server version and hardware")
