"""Prompted text classification: prompt layouts, answer checking and batch runs."""

from __future__ import annotations

import csv
import enum
import json
import string
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, Iterable, Sequence

from .errors import ApiError, RequestTimeout, Unreachable
from .transport import OllamaClient
from .types import ChatMessage, GenerationOptions, ModelTag

DEFAULT_SYSTEM = "You assign texts into categories. Answer with just the correct category."
DEFAULT_USER_FORMAT = "text: {text}\ncategories: {categories}"
REASONING_INSTRUCTION = "Think step by step, then state only the category on the last line."
CATEGORY_SEPARATOR = "|"


class Strategy(str, enum.Enum):
    ZERO_SHOT = "zero_shot"
    ONE_SHOT = "one_shot"
    FEW_SHOT = "few_shot"
    CHAIN_OF_THOUGHT = "chain_of_thought"

    def check_examples(self, count: int) -> None:
        if self is Strategy.ZERO_SHOT and count != 0:
            raise ValueError(f"zero_shot takes no examples, got {count}")
        if self is Strategy.ONE_SHOT and count != 1:
            raise ValueError(f"one_shot needs exactly 1 example, got {count}")
        if self is Strategy.FEW_SHOT and count < 2:
            raise ValueError(f"few_shot needs at least 2 examples, got {count}")


@dataclass(frozen=True)
class PromptTemplate:
    system: str = DEFAULT_SYSTEM
    examples: tuple[tuple[str, str], ...] = ()
    user_format: str = DEFAULT_USER_FORMAT

    def __post_init__(self) -> None:
        if "{text}" not in self.user_format:
            raise ValueError("user_format must contain the {text} placeholder")
        object.__setattr__(self, "examples", tuple((str(t), str(a)) for t, a in self.examples))

    def format_user(self, text: str, categories: Sequence[str]) -> str:
        # str.replace rather than str.format: texts may contain braces
        return self.user_format.replace("{categories}", ", ".join(categories)).replace("{text}", text)


class ValidationError(ValueError):
    """The model's reply did not name one of the allowed categories."""

    def __init__(self, raw: str, categories: Sequence[str]):
        super().__init__(f"reply {raw!r} is not one of {list(categories)}")
        self.raw = raw


@dataclass(frozen=True)
class AnnotationRecord:
    id: str
    text: str
    categories: tuple[str, ...] = ()
    answer: str | None = None
    raw_response: str | None = None
    error: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "categories", tuple(self.categories))
        if self.answer is not None and self.answer not in self.categories:
            raise ValueError(f"answer {self.answer!r} is not among the categories of record {self.id}")


def build_messages(
    template: PromptTemplate,
    strategy: Strategy,
    text: str,
    categories: Sequence[str],
) -> list[ChatMessage]:
    strategy = Strategy(strategy)
    strategy.check_examples(len(template.examples))
    system = template.system
    if strategy is Strategy.CHAIN_OF_THOUGHT:
        system = f"{system} {REASONING_INSTRUCTION}" if system else REASONING_INSTRUCTION
    messages = [ChatMessage.system(system)]
    for example_text, answer in template.examples:
        messages.append(ChatMessage.user(template.format_user(example_text, categories)))
        messages.append(ChatMessage.assistant(answer))
    messages.append(ChatMessage.user(template.format_user(text, categories)))
    return messages


_STRIP = string.whitespace + string.punctuation


def _normalize(label: str) -> str:
    return label.strip(_STRIP).casefold()


def validate_answer(raw: str, categories: Sequence[str], *, last_line: bool = False) -> str:
    """Map a model reply onto one of ``categories`` or raise ValidationError.

    With ``last_line`` only the final non-empty line is considered, which is
    where chain-of-thought prompts ask for the verdict.
    """
    if not categories:
        raise ValueError("categories must be non-empty")
    folded = {_normalize(c): c for c in categories}
    if len(folded) != len(categories):
        raise ValueError(f"categories are not distinct after case-folding: {list(categories)}")
    candidate = raw
    if last_line:
        lines = [line for line in raw.splitlines() if line.strip()]
        candidate = lines[-1] if lines else ""
    match = folded.get(_normalize(candidate))
    if match is None:
        raise ValidationError(raw, categories)
    return match


class _Progress:
    def __init__(self, total: int, stream: IO[str] | None):
        self.total, self.done, self.stream = total, 0, stream
        self._lock = threading.Lock()

    def tick(self) -> None:
        with self._lock:
            self.done += 1
            if self.stream is not None:
                self.stream.write(f"{self.done}/{self.total}\n")
                self.stream.flush()


def annotate_one(
    client: OllamaClient,
    record: AnnotationRecord,
    template: PromptTemplate,
    strategy: Strategy,
    model: ModelTag | str | None,
    options: GenerationOptions | None,
) -> AnnotationRecord:
    """Annotate a single record, capturing any failure on the record itself."""
    if not record.categories:
        return replace(record, answer=None, raw_response=None, error="record has no categories")
    try:
        messages = build_messages(template, strategy, record.text, record.categories)
    except ValueError as exc:
        return replace(record, answer=None, raw_response=None, error=str(exc))
    raw = None
    for attempt in range(2):
        try:
            raw = client.chat_request(messages, model, options).content
            break
        except RequestTimeout as exc:
            if attempt == 1:
                return replace(record, answer=None, raw_response=None, error=f"timeout: {exc}")
        except ApiError as exc:
            return replace(record, answer=None, raw_response=None, error=f"{exc.kind.value}: {exc}")
    try:
        answer = validate_answer(raw, record.categories, last_line=strategy is Strategy.CHAIN_OF_THOUGHT)
    except ValidationError as exc:
        return replace(record, answer=None, raw_response=raw, error=str(exc))
    return replace(record, answer=answer, raw_response=raw, error=None)


def annotate_batch(
    client: OllamaClient,
    records: Sequence[AnnotationRecord],
    template: PromptTemplate | None = None,
    strategy: Strategy = Strategy.ZERO_SHOT,
    model: ModelTag | str | None = None,
    options: GenerationOptions | None = None,
    concurrency: int = 1,
    *,
    seed: int | None = None,
    progress: IO[str] | None | str = "stderr",
) -> list[AnnotationRecord]:
    """Annotate every record; results come back in input order.

    Individual failures end up in ``record.error``. Only an unreachable server
    (checked once up front) raises. ``progress`` receives one ``k/n`` line per
    finished record; it defaults to standard error and ``None`` silences it.
    """
    if concurrency < 1:
        raise ValueError("concurrency must be >= 1")
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValueError(f"duplicate record ids: {', '.join(dupes)}")
    template = template or PromptTemplate()
    strategy = Strategy(strategy)
    strategy.check_examples(len(template.examples))
    options = options or GenerationOptions()
    if seed is not None:
        options = replace(
            options, seed=seed, temperature=0.0 if options.temperature is None else options.temperature
        )
    if not records:
        return []
    if not client.ping().reachable:
        raise Unreachable(f"no server answering at {client.config.base_url}")

    tracker = _Progress(len(records), sys.stderr if progress == "stderr" else progress)

    def work(record: AnnotationRecord) -> AnnotationRecord:
        try:
            return annotate_one(client, record, template, strategy, model, options)
        finally:
            tracker.tick()

    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        return list(pool.map(work, records))


# corpus files


def split_categories(cell: str | None) -> tuple[str, ...]:
    if not cell:
        return ()
    return tuple(c.strip() for c in cell.split(CATEGORY_SEPARATOR) if c.strip())


def _infer_format(path: str | Path, fmt: str | None) -> str:
    if fmt:
        return fmt
    suffix = Path(path).suffix.lower()
    if suffix in (".jsonl", ".ndjson"):
        return "jsonl"
    if suffix == ".csv":
        return "csv"
    raise ValueError(f"cannot infer corpus format from {path}; pass csv or jsonl explicitly")


def _records_from_rows(rows: Iterable[dict], categories: Sequence[str], where: str) -> list[AnnotationRecord]:
    records, seen = [], set()
    for row in rows:
        if "id" not in row or "text" not in row:
            raise ValueError(f"{where}: rows need 'id' and 'text' fields")
        rid = str(row["id"])
        if rid in seen:
            raise ValueError(f"{where}: duplicate id {rid!r}")
        seen.add(rid)
        cats = row.get("categories")
        cats = split_categories(cats) if isinstance(cats, str) or cats is None else tuple(cats)
        records.append(AnnotationRecord(
            rid, row["text"], cats or tuple(categories),
            answer=row.get("answer") or None,
            raw_response=row.get("raw_response") or None,
            error=row.get("error") or None,
        ))
    return records


def read_corpus(
    source: str | Path,
    format: str | None = None,
    categories: Sequence[str] = (),
) -> list[AnnotationRecord]:
    """Load records from CSV (``id,text[,categories]``) or JSONL.

    Rows without their own categories get the batch-level ``categories``.
    """
    fmt = _infer_format(source, format)
    with open(source, newline="", encoding="utf-8") as fp:
        if fmt == "csv":
            reader = csv.DictReader(fp)
            missing = {"id", "text"} - set(reader.fieldnames or ())
            if missing:
                raise ValueError(f"{source}: missing required column(s) {', '.join(sorted(missing))}")
            return _records_from_rows(reader, categories, str(source))
        if fmt == "jsonl":
            return _records_from_rows((json.loads(line) for line in fp if line.strip()), categories, str(source))
    raise ValueError(f"unknown corpus format {fmt!r}")


RESULT_COLUMNS = ["id", "text", "categories", "answer", "raw_response", "error"]


def write_results(records: Sequence[AnnotationRecord], destination: str | Path, format: str | None = None) -> None:
    fmt = _infer_format(destination, format)
    with open(destination, "w", newline="", encoding="utf-8") as fp:
        if fmt == "csv":
            writer = csv.DictWriter(fp, RESULT_COLUMNS)
            writer.writeheader()
            for r in records:
                writer.writerow({
                    "id": r.id, "text": r.text, "categories": CATEGORY_SEPARATOR.join(r.categories),
                    "answer": r.answer or "", "raw_response": r.raw_response or "", "error": r.error or "",
                })
        elif fmt == "jsonl":
            for r in records:
                row = {
                    "id": r.id, "text": r.text, "categories": list(r.categories),
                    "answer": r.answer, "raw_response": r.raw_response, "error": r.error,
                }
                fp.write(json.dumps(row, ensure_ascii=False) + "\n")
        else:
            raise ValueError(f"unknown result format {fmt!r}")


def read_examples(source: str | Path, format: str | None = None) -> tuple[tuple[str, str], ...]:
    """Worked examples for one/few-shot prompts: rows with ``text`` and ``answer``."""
    fmt = _infer_format(source, format)
    with open(source, newline="", encoding="utf-8") as fp:
        rows = list(csv.DictReader(fp)) if fmt == "csv" else [json.loads(l) for l in fp if l.strip()]
    try:
        return tuple((row["text"], row["answer"]) for row in rows)
    except KeyError as exc:
        raise ValueError(f"{source}: examples need 'text' and 'answer' fields") from exc
