"""Shared fixtures and test-only model backends."""

from __future__ import annotations

import itertools
import math
import zlib
from pathlib import Path

import numpy as np
import pytest

from docdial.kb import (
    Dialog,
    DocKey,
    Document,
    EntityCandidate,
    KnowledgeBase,
    Speaker,
    Turn,
    load_knowledge,
    load_labels,
    load_logs,
)
from docdial.scoring import EOS

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def small_kb() -> KnowledgeBase:
    return load_knowledge(DATA / "knowledge.json")


@pytest.fixture
def small_logs():
    return load_logs(DATA / "logs.json")


@pytest.fixture
def small_labels():
    return load_labels(DATA / "labels.json")


def user(text: str, nbest=None) -> Turn:
    return Turn(Speaker.USER, text, nbest)


def system(text: str) -> Turn:
    return Turn(Speaker.SYSTEM, text)


def doc(domain: str, entity_id: str, doc_id: str, question="q", answer="a", name="auto") -> Document:
    if name == "auto":
        name = None if entity_id == "*" else f"{domain}-{entity_id}"
    return Document(DocKey(domain, entity_id, doc_id), name, question, answer)


class ConstScorer:
    """Binary scorer that always returns the same value."""

    def __init__(self, value: float):
        self.value = value

    def score(self, context) -> float:
        return self.value


class TableScorer:
    """Relevance scorer backed by dicts keyed on entity ``(domain, entity_id)`` and DocKey."""

    def __init__(self, entity_scores=None, doc_scores=None, domain_scores=None, default=0.0):
        self.entity_scores = entity_scores or {}
        self.doc_scores = doc_scores or {}
        self.domain_scores = domain_scores or {}
        self.default = default

    def score(self, context, candidate) -> float:
        if isinstance(candidate, Document):
            return self.doc_scores.get(candidate.key, self.default)
        if isinstance(candidate, EntityCandidate):
            return self.entity_scores.get(candidate.key, self.default)
        return self.domain_scores.get(candidate.domain, self.default)


class TableModel:
    """Next-token model from an explicit ``prefix -> distribution`` table; uniform for unlisted prefixes.

    ``tables`` may also be keyed by the source tuple, which makes the model
    source-dependent (used for mixtures).
    """

    def __init__(self, vocab, table=None, by_source=None):
        self.vocab = list(vocab)
        self.eos_id = self.vocab.index(EOS)
        self.table = {tuple(k): np.asarray(v, dtype=np.float64) for k, v in (table or {}).items()}
        self.by_source = by_source or {}

    def next_token_distribution(self, prefix, source):
        table = self.by_source.get(tuple(source), self.table)
        dist = table.get(tuple(prefix))
        if dist is None:
            return np.full(len(self.vocab), 1.0 / len(self.vocab))
        return np.asarray(dist, dtype=np.float64)


class HashModel:
    """Deterministic pseudo-random distribution for every (source, prefix) pair."""

    def __init__(self, vocab, seed=0, concentration=0.5):
        self.vocab = list(vocab)
        self.eos_id = self.vocab.index(EOS)
        self.seed = seed
        self.concentration = concentration

    def next_token_distribution(self, prefix, source):
        key = zlib.crc32(repr((self.seed, tuple(source), tuple(prefix))).encode())
        rng = np.random.default_rng(key)
        return rng.dirichlet(np.full(len(self.vocab), self.concentration))


def random_table_model(rng: np.random.Generator, vocab, max_len: int) -> TableModel:
    """Dirichlet distributions for every non-terminal prefix of length < max_len."""
    ids = range(len(vocab))
    eos = vocab.index(EOS)
    table = {}
    for n in range(max_len):
        for prefix in itertools.product(ids, repeat=n):
            if eos not in prefix:
                table[prefix] = rng.dirichlet(np.ones(len(vocab)))
    return TableModel(vocab, table)


def enumerate_sequences(model, source, max_len: int):
    """Every hypothesis reachable within ``max_len`` steps as ``(tokens incl. eos if complete, log_prob)``."""
    out = []
    eos = model.eos_id

    def walk(prefix, lp):
        if prefix and prefix[-1] == eos:
            out.append((prefix, lp))
            return
        if len(prefix) == max_len:
            out.append((prefix, lp))
            return
        dist = model.next_token_distribution(prefix, source)
        for t, p in enumerate(dist):
            if p > 0:
                walk(prefix + (t,), lp + math.log(p))

    walk((), 0.0)
    return out


def make_dialog(*texts, dialog_id="d") -> Dialog:
    speakers = itertools.cycle([Speaker.USER, Speaker.SYSTEM])
    return Dialog(dialog_id, tuple(Turn(s, t) for s, t in zip(speakers, texts)))


SEPARABLE_WORDS = "alpha bravo charlie delta echo foxtrot golf hotel india juliet".split()


def separable_dataset():
    """Ten (context, document) pairs; every pair has its own private vocabulary."""
    kb = KnowledgeBase(
        [doc("d", str(i), "0", question=f"{w}q {w}r", answer=f"{w}s") for i, w in enumerate(SEPARABLE_WORDS)]
    )
    pairs = [([user(f"{w}u {w}v")], DocKey("d", str(i), "0")) for i, w in enumerate(SEPARABLE_WORDS)]
    return kb, pairs
