"""Model-call and latency benchmark for the selection strategies.

Scorers and embedders are wrapped in counting proxies, so the reported call
counts are exact for any backend. Wall time is reported, never asserted.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Sequence

import numpy as np

from .kb import Document, DocKey, KnowledgeBase, Turn
from .scoring import Candidate, Embedder, HashedBowEmbedder, LexicalOverlapScorer, Metric, RelevanceScorer
from .selection import (
    HierarchicalConfig,
    HierarchicalScorers,
    HierarchyVariant,
    build_index,
    query_index,
    rank_flat,
    select_hierarchical_beam,
    select_hierarchical_greedy,
)

DEFAULT_STRATEGIES = ("flat", "greedy", "greedy-3stage", "beam", "biencoder")


class CountingScorer:
    def __init__(self, inner: RelevanceScorer):
        self.inner = inner
        self.calls = 0

    def score(self, context: Sequence[Turn], candidate: Candidate) -> float:
        self.calls += 1
        return self.inner.score(context, candidate)


class CountingEmbedder:
    def __init__(self, inner: Embedder):
        self.inner = inner
        self.dim = inner.dim
        self.context_calls = 0
        self.document_calls = 0

    def embed_context(self, turns: Sequence[Turn]) -> np.ndarray:
        self.context_calls += 1
        return self.inner.embed_context(turns)

    def embed_document(self, doc: Document) -> np.ndarray:
        self.document_calls += 1
        return self.inner.embed_document(doc)


@dataclass
class StrategyStats:
    scorer_calls: list[int] = field(default_factory=list)
    embed_calls: list[int] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)

    @property
    def mean_scorer_calls(self) -> float:
        return float(np.mean(self.scorer_calls)) if self.scorer_calls else 0.0

    @property
    def mean_embed_calls(self) -> float:
        return float(np.mean(self.embed_calls)) if self.embed_calls else 0.0

    @property
    def wall_time_seconds_per_turn(self) -> float:
        return float(np.mean(self.seconds)) if self.seconds else 0.0

    def to_json(self) -> dict:
        return {
            "scorer_calls_per_turn": self.scorer_calls,
            "embed_calls_per_turn": self.embed_calls,
            "mean_scorer_calls": self.mean_scorer_calls,
            "mean_embed_calls": self.mean_embed_calls,
            "wall_time_seconds_per_turn": self.wall_time_seconds_per_turn,
        }


@dataclass
class BenchReport:
    dataset: dict
    strategies: dict[str, StrategyStats]
    index_embed_calls: int = 0

    def model_calls(self, strategy: str) -> float:
        stats = self.strategies[strategy]
        return stats.mean_scorer_calls + stats.mean_embed_calls

    def speedup(self, strategy: str, baseline: str = "flat") -> float:
        """Ratio of mean model calls per turn, baseline over strategy."""
        return self.model_calls(baseline) / self.model_calls(strategy)

    def to_json(self) -> dict:
        out = {
            "dataset": self.dataset,
            "index_embed_calls": self.index_embed_calls,
            "strategies": {name: s.to_json() for name, s in self.strategies.items()},
        }
        if "flat" in self.strategies:
            out["call_speedup_vs_flat"] = {name: self.speedup(name) for name in self.strategies}
        return out


def bench_selection(
    kb: KnowledgeBase,
    contexts: Sequence[Sequence[Turn]],
    strategies: Sequence[str] = DEFAULT_STRATEGIES,
    scorer: RelevanceScorer | None = None,
    embedder: Embedder | None = None,
    threshold: float = 0.5,
    gamma: float = 1.0,
    metric: Metric = Metric.COSINE,
    workers: int = 1,
) -> BenchReport:
    """Run every strategy on every context and record per-turn model calls and wall time.

    ``greedy`` and ``beam`` use the joint entity/document variant,
    ``greedy-3stage`` and ``beam-3stage`` the domain/entity/document one.
    Each turn gets fresh counting wrappers, so counts stay exact with
    ``workers > 1``; timings in that mode measure throughput, not latency.
    """
    unknown = [s for s in strategies if s not in RUNNERS]
    if unknown:
        raise ValueError(f"unknown strategies {unknown}; expected some of {sorted(RUNNERS)}")
    scorer = scorer or LexicalOverlapScorer()
    embedder = embedder or HashedBowEmbedder()
    index, index_calls = None, 0
    if "biencoder" in strategies:
        counting = CountingEmbedder(embedder)
        index = build_index(kb, counting, metric)
        index_calls = counting.document_calls
    joint = HierarchicalConfig(HierarchyVariant.JOINT_ENTITY_DOC, threshold, gamma)
    three = HierarchicalConfig(HierarchyVariant.THREE_STAGE, threshold, gamma)
    env = _Env(kb, scorer, embedder, index, joint, three)

    report = BenchReport(
        dataset={
            "documents": len(kb),
            "domains": len(kb.domains),
            "entities": len(kb.entities()),
            "turns": len(contexts),
        },
        strategies={},
        index_embed_calls=index_calls,
    )
    for name in strategies:
        run = partial(_run_turn, RUNNERS[name], env)
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                results = list(pool.map(run, contexts))
        else:
            results = [run(ctx) for ctx in contexts]
        stats = StrategyStats()
        for calls, embeds, secs in results:
            stats.scorer_calls.append(calls)
            stats.embed_calls.append(embeds)
            stats.seconds.append(secs)
        report.strategies[name] = stats
    return report


@dataclass(frozen=True)
class _Env:
    kb: KnowledgeBase
    scorer: RelevanceScorer
    embedder: Embedder
    index: object
    joint: HierarchicalConfig
    three: HierarchicalConfig


def _run_turn(runner, env: _Env, ctx: Sequence[Turn]) -> tuple[int, int, float]:
    counter = CountingScorer(env.scorer)
    emb = CountingEmbedder(env.embedder)
    start = time.perf_counter()
    runner(env, counter, emb, ctx)
    return counter.calls, emb.context_calls + emb.document_calls, time.perf_counter() - start


def _hier(counter):
    return HierarchicalScorers(entity=counter, document=counter, domain=counter)


RUNNERS = {
    "flat": lambda env, c, e, ctx: rank_flat(ctx, env.kb, c),
    "greedy": lambda env, c, e, ctx: select_hierarchical_greedy(ctx, env.kb, _hier(c), env.joint),
    "greedy-3stage": lambda env, c, e, ctx: select_hierarchical_greedy(ctx, env.kb, _hier(c), env.three),
    "beam": lambda env, c, e, ctx: select_hierarchical_beam(ctx, env.kb, _hier(c), env.joint),
    "beam-3stage": lambda env, c, e, ctx: select_hierarchical_beam(ctx, env.kb, _hier(c), env.three),
    "biencoder": lambda env, c, e, ctx: query_index(ctx, env.index, e),
}


def synthetic_kb(domains: int, entities: int, docs: int) -> KnowledgeBase:
    """A ``domains x entities x docs`` knowledge base with distinct, overlapping-vocabulary texts."""
    out = []
    for d in range(domains):
        for e in range(entities):
            for k in range(docs):
                out.append(
                    Document(
                        DocKey(f"domain{d}", f"{e}", f"{k}"),
                        f"entity {d} {e}",
                        f"question {k} about entity {e} in domain {d}",
                        f"answer {k} for entity {e}",
                    )
                )
    return KnowledgeBase(out)
