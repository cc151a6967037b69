"""Probability sources used by detection, selection and generation.

The pipeline only talks to the small protocols defined here, so precomputed
neural scores (``FileBackedScorer``) and the deterministic reference backends
below are interchangeable.
"""

from __future__ import annotations

import enum
import json
import math
import zlib
from collections import Counter
from pathlib import Path
from typing import Protocol, Sequence, Union, runtime_checkable

import numpy as np

from .kb import AsrHypothesis, Document, DomainCandidate, EntityCandidate, KnowledgeBase, Turn
from .textnorm import NormalizationConfig, normalize_text

Candidate = Union[Document, EntityCandidate, DomainCandidate]

EOS = "</s>"
BOS = "<s>"


@runtime_checkable
class RelevanceScorer(Protocol):
    def score(self, context: Sequence[Turn], candidate: Candidate) -> float: ...


@runtime_checkable
class BinaryScorer(Protocol):
    """Probability that the last turn of ``context`` is knowledge-seeking."""

    def score(self, context: Sequence[Turn]) -> float: ...


@runtime_checkable
class Embedder(Protocol):
    dim: int

    def embed_context(self, turns: Sequence[Turn]) -> np.ndarray: ...

    def embed_document(self, doc: Document) -> np.ndarray: ...


@runtime_checkable
class ConditionalTokenModel(Protocol):
    """Next-token distribution over ``vocab`` given a decoded prefix and a source sequence.

    ``source`` is the conditioning input built by
    :func:`docdial.generation.build_generation_input` (style marker, grounding
    document, dialog context). ``prefix`` holds vocabulary ids.
    """

    vocab: Sequence[str]
    eos_id: int

    def next_token_distribution(self, prefix: Sequence[int], source: Sequence[str]) -> np.ndarray: ...


@runtime_checkable
class ChannelScorer(Protocol):
    def log_score(self, response: Sequence[str], context: Sequence[Turn], doc: Document) -> float: ...


# -- ASR n-best handling ------------------------------------------------------


class NbestStrategy(enum.Enum):
    BEST = "best"
    WEIGHTED = "weighted"
    FIRST_ONLY = "first"


def renormalize_nbest(hyps: Sequence[AsrHypothesis]) -> list[tuple[AsrHypothesis, float]]:
    """Treat scores as log-probabilities and softmax them into a posterior."""
    if not hyps:
        raise ValueError("empty n-best list")
    scores = np.array([h.score for h in hyps], dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise ValueError("n-best scores must be finite")
    w = np.exp(scores - scores.max())
    w /= w.sum()
    return list(zip(hyps, w.tolist()))


def combine_nbest(scores: Sequence[float], hyp_probs: Sequence[float], strategy: NbestStrategy) -> float:
    if len(scores) != len(hyp_probs):
        raise ValueError(f"{len(scores)} scores but {len(hyp_probs)} hypothesis probabilities")
    if not scores:
        raise ValueError("nothing to combine")
    if strategy is NbestStrategy.BEST:
        return max(scores)
    if strategy is NbestStrategy.WEIGHTED:
        if abs(math.fsum(hyp_probs) - 1.0) > 1e-9:
            raise ValueError("hypothesis probabilities must sum to 1")
        return math.fsum(p * s for p, s in zip(hyp_probs, scores))
    raise ValueError(f"combine_nbest does not handle {strategy}")


# -- vector similarity --------------------------------------------------------


class Metric(enum.Enum):
    DOT = "dot"
    COSINE = "cosine"
    EUCLIDEAN = "euclidean"


def similarity(u: np.ndarray, v: np.ndarray, metric: Metric) -> float:
    """Dot/cosine similarity, or Euclidean *distance* (lower is closer)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch {u.shape} vs {v.shape}")
    if metric is Metric.DOT:
        return float(u @ v)
    if metric is Metric.COSINE:
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        if nu == 0 or nv == 0:
            raise ValueError("cosine similarity of a zero vector")
        return float(u @ v / (nu * nv))
    return float(np.linalg.norm(u - v))


# -- reference backends -------------------------------------------------------

_SCORER_NORM = NormalizationConfig()


def _tokens(text: str, config: NormalizationConfig = _SCORER_NORM) -> list[str]:
    return normalize_text(text, config).split()


def unigram_f1(hyp: Sequence[str], ref: Sequence[str]) -> float:
    common = sum((Counter(hyp) & Counter(ref)).values())
    if common == 0:
        return 0.0
    p, r = common / len(hyp), common / len(ref)
    return 2 * p * r / (p + r)


def squash(f1: float) -> float:
    return min(max(f1, 0.01), 0.99)


class LexicalOverlapScorer:
    """Unigram F1 between the last context turn and the candidate text, clipped to [0.01, 0.99]."""

    def __init__(self, config: NormalizationConfig = _SCORER_NORM):
        self.config = config

    def score(self, context: Sequence[Turn], candidate: Candidate) -> float:
        tail = _tokens(context[-1].text, self.config) if context else []
        return squash(unigram_f1(tail, _tokens(candidate.text, self.config)))


class LexicalDetector:
    """Binary scorer: best raw unigram F1 of the last turn against any document question."""

    def __init__(self, kb: KnowledgeBase, config: NormalizationConfig = _SCORER_NORM):
        self.config = config
        self._questions = [_tokens(d.question, config) for d in kb]

    def score(self, context: Sequence[Turn]) -> float:
        if not context or not self._questions:
            return 0.0
        tail = _tokens(context[-1].text, self.config)
        return max(unigram_f1(tail, q) for q in self._questions)


class LexicalChannelScorer:
    """log p(K'|w, u) stand-in: squashed overlap between the response and the document."""

    def __init__(self, config: NormalizationConfig = _SCORER_NORM):
        self.config = config

    def log_score(self, response: Sequence[str], context: Sequence[Turn], doc: Document) -> float:
        resp = _tokens(" ".join(response), self.config)
        return math.log(squash(unigram_f1(resp, _tokens(doc.text, self.config))))


class FileBackedScorer:
    """Relevance scores read from JSON lines ``{context_id, domain, entity_id, doc_id, score}``.

    Rows with ``doc_id`` null score entities, rows with ``entity_id`` null score
    domains. Use :meth:`for_context` to get a scorer bound to one dialog.
    """

    def __init__(self, table: dict[tuple, float], default: float | None = None):
        self._table = table
        self.default = default

    @classmethod
    def load(cls, path: str | Path, default: float | None = None) -> "FileBackedScorer":
        table = {}
        with open(path, encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    row = json.loads(line)
                    key = (str(row["context_id"]), row["domain"], row.get("entity_id"), row.get("doc_id"))
                    key = tuple(None if k is None else str(k) for k in key)
                    table[key] = float(row["score"])
        return cls(table, default)

    def lookup(self, context_id: str, candidate: Candidate) -> float:
        if isinstance(candidate, Document):
            key = (context_id, *candidate.key.entity, candidate.key.doc_id)
        elif isinstance(candidate, EntityCandidate):
            key = (context_id, candidate.domain, candidate.entity_id, None)
        else:
            key = (context_id, candidate.domain, None, None)
        if key in self._table:
            return self._table[key]
        if self.default is None:
            raise KeyError(f"no precomputed score for {key}")
        return self.default

    def for_context(self, context_id: str) -> "_BoundFileScorer":
        return _BoundFileScorer(self, str(context_id))


class _BoundFileScorer:
    def __init__(self, table: FileBackedScorer, context_id: str):
        self._table = table
        self.context_id = context_id

    def score(self, context: Sequence[Turn], candidate: Candidate) -> float:
        return self._table.lookup(self.context_id, candidate)


def stable_hash(token: str) -> int:
    return zlib.crc32(token.encode("utf-8"))


class HashedBowEmbedder:
    """Hashed bag of words followed by separate trainable linear maps for contexts and documents.

    ``context_weights`` and ``document_weights`` have shape ``(dim, buckets)``;
    they are the parameters the bi-encoder trainer updates.
    """

    def __init__(
        self,
        dim: int = 32,
        buckets: int = 512,
        seed: int = 0,
        config: NormalizationConfig = _SCORER_NORM,
        init_scale: float = 0.1,
    ):
        self.dim = dim
        self.buckets = buckets
        self.config = config
        rng = np.random.default_rng(seed)
        w = rng.normal(0.0, init_scale, size=(dim, buckets))
        self.context_weights = w.copy()
        self.document_weights = w.copy()

    def copy(self) -> "HashedBowEmbedder":
        other = object.__new__(HashedBowEmbedder)
        other.__dict__.update(self.__dict__)
        other.context_weights = self.context_weights.copy()
        other.document_weights = self.document_weights.copy()
        return other

    def features(self, text: str) -> np.ndarray:
        h = np.zeros(self.buckets)
        for tok in _tokens(text, self.config):
            h[stable_hash(tok) % self.buckets] += 1.0
        return h

    def context_features(self, turns: Sequence[Turn]) -> np.ndarray:
        return self.features(" ".join(t.text for t in turns))

    def document_features(self, doc: Document) -> np.ndarray:
        return self.features(doc.text)

    def embed_context(self, turns: Sequence[Turn]) -> np.ndarray:
        return self.context_weights @ self.context_features(turns)

    def embed_document(self, doc: Document) -> np.ndarray:
        return self.document_weights @ self.document_features(doc)

    def save(self, path: str | Path) -> None:
        np.savez(
            path,
            context_weights=self.context_weights,
            document_weights=self.document_weights,
        )

    @classmethod
    def load(cls, path: str | Path, config: NormalizationConfig = _SCORER_NORM) -> "HashedBowEmbedder":
        data = np.load(path)
        dim, buckets = data["context_weights"].shape
        emb = cls(dim=dim, buckets=buckets, config=config)
        emb.context_weights = data["context_weights"].copy()
        emb.document_weights = data["document_weights"].copy()
        return emb


def _is_marker(token: str) -> bool:
    return len(token) > 2 and token.startswith("<") and token.endswith(">")


class SmoothedBigramModel:
    """Add-alpha bigram model estimated on the fly from the source sequence.

    The source is split at marker tokens (``<sep>``, speaker tags, style
    markers); each segment contributes the bigrams of ``<s> segment </s>``.
    Source tokens outside ``vocab`` are skipped.
    """

    def __init__(self, vocab: Sequence[str], alpha: float = 0.1):
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        vocab = list(dict.fromkeys(vocab))
        if EOS not in vocab:
            vocab.append(EOS)
        self.vocab = vocab
        self.eos_id = vocab.index(EOS)
        self.alpha = alpha
        self._index = {tok: i for i, tok in enumerate(vocab)}
        self._cache: tuple[tuple[str, ...], dict] | None = None

    @classmethod
    def from_texts(cls, texts: Sequence[str], alpha: float = 0.1, tokenizer=None) -> "SmoothedBigramModel":
        from .generation import tokenize

        tokenizer = tokenizer or tokenize
        vocab = sorted({tok for text in texts for tok in tokenizer(text)})
        return cls(vocab, alpha)

    def _counts(self, source: Sequence[str]) -> dict:
        key = tuple(source)
        cached = self._cache
        if cached is not None and cached[0] == key:
            return cached[1]
        bigrams: dict[int, np.ndarray] = {}
        segment: list[int] = []

        def flush():
            prev = -1  # BOS
            for tid in segment + [self.eos_id]:
                bigrams.setdefault(prev, np.zeros(len(self.vocab)))[tid] += 1.0
                prev = tid
            segment.clear()

        for tok in source:
            if _is_marker(tok):
                if segment:
                    flush()
            elif tok in self._index and tok != EOS:
                segment.append(self._index[tok])
        if segment:
            flush()
        self._cache = (key, bigrams)
        return bigrams

    def next_token_distribution(self, prefix: Sequence[int], source: Sequence[str]) -> np.ndarray:
        counts = self._counts(source).get(prefix[-1] if prefix else -1)
        v = len(self.vocab)
        if counts is None:
            return np.full(v, 1.0 / v)
        return (counts + self.alpha) / (counts.sum() + self.alpha * v)
