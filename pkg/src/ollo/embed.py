"""Turn documents into embedding matrices and write them to disk."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .transport import OllamaClient
from .types import ModelTag


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class EmbeddingMatrix:
    model: ModelTag
    ids: tuple[str, ...]
    vectors: tuple[tuple[float, ...], ...]
    dimension: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "model", ModelTag.parse(self.model))
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "vectors", tuple(tuple(v) for v in self.vectors))
        if len(self.ids) != len(self.vectors):
            raise ValueError(f"{len(self.ids)} ids but {len(self.vectors)} vectors")
        for rid, vec in zip(self.ids, self.vectors):
            if len(vec) != self.dimension:
                raise DimensionMismatch(f"row {rid!r} has length {len(vec)}, expected {self.dimension}")

    def __len__(self) -> int:
        return len(self.ids)


def normalize(vector: Sequence[float]) -> list[float]:
    """Scale to unit Euclidean norm; the zero vector is returned as is."""
    norm = math.sqrt(math.fsum(x * x for x in vector))
    if norm == 0.0:
        return list(vector)
    return [x / norm for x in vector]


def embed_texts(
    client: OllamaClient,
    texts: Sequence[tuple[str, str]],
    model: ModelTag | str | None = None,
    normalize_rows: bool = False,
    concurrency: int = 1,
) -> EmbeddingMatrix:
    """Embed ``(id, text)`` pairs in input order. Any failure aborts the whole batch."""
    if not texts:
        raise ValueError("texts must be non-empty")
    if concurrency < 1:
        raise ValueError("concurrency must be >= 1")
    ids = [str(i) for i, _ in texts]
    if len(set(ids)) != len(ids):
        raise ValueError("ids must be unique")
    tag = client.config.default_model if model is None else ModelTag.parse(model)

    def work(item: tuple[str, str]) -> list[float]:
        return client.embed_request(item[1], tag)

    # pool.map re-raises the first failure in input order and drops the rest
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        vectors = list(pool.map(work, texts))

    dimension = len(vectors[0])
    for rid, vec in zip(ids, vectors):
        if len(vec) != dimension:
            raise DimensionMismatch(
                f"server returned {len(vec)} values for {rid!r} but {dimension} for {ids[0]!r}"
            )
    if normalize_rows:
        vectors = [normalize(v) for v in vectors]
    return EmbeddingMatrix(tag, ids, vectors, dimension)


def _fmt(x: float) -> str:
    return format(x, ".17g")


def write_matrix(matrix: EmbeddingMatrix, destination: str | Path, format: str = "csv") -> None:
    with open(destination, "w", newline="", encoding="utf-8") as fp:
        if format == "csv":
            writer = csv.writer(fp)
            writer.writerow(["id"] + [f"d{j}" for j in range(matrix.dimension)])
            for rid, vec in zip(matrix.ids, matrix.vectors):
                writer.writerow([rid] + [_fmt(x) for x in vec])
        elif format == "jsonl":
            for rid, vec in zip(matrix.ids, matrix.vectors):
                fp.write(json.dumps({"id": rid, "embedding": list(vec)}) + "\n")
        else:
            raise ValueError(f"unknown matrix format {format!r}")


def read_matrix(source: str | Path, model: ModelTag | str, format: str = "csv") -> EmbeddingMatrix:
    """Inverse of :func:`write_matrix`. The files do not record the model, so pass it in."""
    ids: list[str] = []
    vectors: list[list[float]] = []
    with open(source, newline="", encoding="utf-8") as fp:
        if format == "csv":
            reader = csv.reader(fp)
            header = next(reader, None)
            if not header or header[0] != "id":
                raise ValueError(f"{source}: expected a header starting with 'id'")
            dimension = len(header) - 1
            for row in reader:
                ids.append(row[0])
                vectors.append([float(x) for x in row[1:]])
        elif format == "jsonl":
            for line in fp:
                if line.strip():
                    row = json.loads(line)
                    ids.append(str(row["id"]))
                    vectors.append([float(x) for x in row["embedding"]])
            dimension = len(vectors[0]) if vectors else 0
        else:
            raise ValueError(f"unknown matrix format {format!r}")
    return EmbeddingMatrix(model, ids, vectors, dimension)
