"""Exact nearest-neighbour index over precomputed document embeddings.

On-disk layout (all little-endian)::

    magic  b"DDIX"        4 bytes
    version               uint32
    dim                   uint32
    count                 uint32
    metric                uint8   (0 dot, 1 cosine, 2 euclidean)
    embeddings            count * dim float64, row-major
    key table length      uint64
    key table             UTF-8 JSON array of [domain, entity_id, doc_id]
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..kb import DocKey, KnowledgeBase, Turn
from ..scoring import Embedder, Metric
from .ranking import TOP_K, SelectionResult

MAGIC = b"DDIX"
VERSION = 1
_HEADER = struct.Struct("<4sIIIB")
_METRIC_CODES = {Metric.DOT: 0, Metric.COSINE: 1, Metric.EUCLIDEAN: 2}


class IndexBuildError(RuntimeError):
    pass


@dataclass
class BiEncoderIndex:
    doc_keys: list[DocKey]
    doc_embeddings: np.ndarray
    metric: Metric

    def __post_init__(self):
        self.doc_embeddings = np.asarray(self.doc_embeddings, dtype=np.float64)
        if self.doc_embeddings.ndim != 2 or self.doc_embeddings.shape[0] != len(self.doc_keys):
            raise ValueError("embedding matrix must have one row per key")
        if not np.all(np.isfinite(self.doc_embeddings)):
            raise ValueError("index contains non-finite entries")

    @property
    def dim(self) -> int:
        return self.doc_embeddings.shape[1]

    def __len__(self) -> int:
        return len(self.doc_keys)

    def scores(self, query: np.ndarray) -> np.ndarray:
        """Ranking scores for every row: similarity, or negative distance for Euclidean."""
        q = np.asarray(query, dtype=np.float64)
        if q.shape != (self.dim,):
            raise ValueError(f"query has shape {q.shape}, index dimension is {self.dim}")
        E = self.doc_embeddings
        if self.metric is Metric.DOT:
            return E @ q
        if self.metric is Metric.COSINE:
            norms = np.linalg.norm(E, axis=1) * np.linalg.norm(q)
            if np.any(norms == 0):
                raise ValueError("cosine similarity of a zero vector")
            return (E @ q) / norms
        return -np.linalg.norm(E - q, axis=1)

    def search(self, query: np.ndarray, k: int = TOP_K) -> SelectionResult:
        scores = self.scores(query)
        flags = ()
        if k > len(self.doc_keys):
            flags = ("k-exceeds-index",)
            k = len(self.doc_keys)
        order = sorted(range(len(scores)), key=lambda i: (-scores[i], self.doc_keys[i]))[:k]
        return SelectionResult(tuple((self.doc_keys[i], float(scores[i])) for i in order), flags)

    def save(self, path: str | Path) -> None:
        keys = json.dumps([[k.domain, k.entity_id, k.doc_id] for k in self.doc_keys], ensure_ascii=False)
        table = keys.encode("utf-8")
        with open(path, "wb") as f:
            f.write(_HEADER.pack(MAGIC, VERSION, self.dim, len(self.doc_keys), _METRIC_CODES[self.metric]))
            f.write(self.doc_embeddings.astype("<f8").tobytes(order="C"))
            f.write(struct.pack("<Q", len(table)))
            f.write(table)

    @classmethod
    def load(cls, path: str | Path) -> "BiEncoderIndex":
        with open(path, "rb") as f:
            magic, version, dim, count, code = _HEADER.unpack(f.read(_HEADER.size))
            if magic != MAGIC:
                raise ValueError(f"{path}: not an index file")
            if version != VERSION:
                raise ValueError(f"{path}: unsupported index version {version}")
            data = np.frombuffer(f.read(8 * dim * count), dtype="<f8").reshape(count, dim)
            (size,) = struct.unpack("<Q", f.read(8))
            keys = [DocKey(*k) for k in json.loads(f.read(size).decode("utf-8"))]
        metric = {v: m for m, v in _METRIC_CODES.items()}[code]
        return cls(keys, data.astype(np.float64), metric)


def build_index(kb: KnowledgeBase, embedder: Embedder, metric: Metric) -> BiEncoderIndex:
    """Embed every document once; rows follow DocKey order."""
    if len(kb) == 0:
        raise ValueError("cannot index an empty knowledge base")
    rows = []
    for doc in kb:
        try:
            rows.append(np.asarray(embedder.embed_document(doc), dtype=np.float64))
        except Exception as e:
            raise IndexBuildError(f"embedding failed for document {doc.key}: {e}") from e
    return BiEncoderIndex([d.key for d in kb], np.vstack(rows), metric)


def query_index(
    context: Sequence[Turn], index: BiEncoderIndex, embedder: Embedder, k: int = TOP_K, metric: Metric | None = None
) -> SelectionResult:
    """Exact k-nearest documents for the context, using a single context embedding."""
    if metric is not None and metric is not index.metric:
        raise ValueError(f"index was built for {index.metric.value}, not {metric.value}")
    return index.search(embedder.embed_context(context), k)
